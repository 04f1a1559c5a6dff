"""Run configuration, output files and the command-line entry point.

Configuration files are flat ``key = value`` text with dotted keys::

    # unit ball, five iterations
    omega.radius = 1
    k_max = 5
    output.slices = -0.5, 0, 0.5

Lines starting with ``#`` and blank lines are ignored. Unknown keys are
rejected.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigParseError, ConfigValidationError, IoError, WildCurrentsError
from .states import IB, IQ, IV1, IV2, Domain

log = logging.getLogger(__name__)

THREADS_ENV = "WILDCURRENTS_THREADS"


@dataclass(frozen=True)
class RunConfig:
    omega_shape: str = "ball"
    omega_radius: float = 1.0
    omega_center: tuple = (0.0, 0.0, 0.0)
    omega_half_widths: tuple = (1.0, 1.0, 1.0)
    k_max: int = 6
    N0: int = 16
    deficit_target: float = 0.2
    r_max: float = 0.2
    margin: float = 0.02
    kappa: float = 32.0
    grid_energy: int = 32768
    grid_ball_probes: int = 24
    grid_global_probes: int = 10000
    grid_mollify_outer: int = 256
    grid_mollify_inner: int = 8192
    grid_weak: int = 16384
    grid_snapshot: int = 64
    weak_trials: int = 4
    retries: int = 3
    seed: int = 0
    output_dir: str = "out"
    output_slices: tuple = (0.0,)

    @property
    def omega(self):
        if self.omega_shape == "ball":
            return Domain.ball(self.omega_radius, self.omega_center)
        return Domain.box(self.omega_half_widths, self.omega_center)

    def settings(self):
        """The numerical settings consumed by :func:`wildcurrents.scheme.run`."""
        from .scheme import SchemeSettings

        return SchemeSettings(
            omega=self.omega, k_max=self.k_max, N0=self.N0, deficit_target=self.deficit_target,
            r_max=self.r_max, margin=self.margin, kappa=self.kappa,
            energy_points=self.grid_energy, ball_probes=self.grid_ball_probes,
            global_probes=self.grid_global_probes, mollify_outer=self.grid_mollify_outer,
            mollify_inner=self.grid_mollify_inner, weak_trials=self.weak_trials,
            weak_points=self.grid_weak, max_retries=self.retries, seed=self.seed,
        )

    def as_dict(self):
        return {_key(f.name): _jsonable(getattr(self, f.name)) for f in fields(self)}


def _key(attr):
    for prefix in ("omega", "grid", "output", "weak"):
        if attr.startswith(prefix + "_"):
            return prefix + "." + attr[len(prefix) + 1:]
    return attr


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


_FIELDS = {_key(f.name): f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _convert(key, raw, lineno):
    proto = getattr(_DEFAULTS, _FIELDS[key].name)
    try:
        if isinstance(proto, bool):
            raise TypeError
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        if isinstance(proto, tuple):
            return tuple(float(p) for p in raw.split(",") if p.strip())
        return raw
    except (TypeError, ValueError):
        kind = type(proto).__name__
        raise ConfigParseError(f"cannot read {raw!r} as {kind}", line=lineno, key=key) from None


def parse_config_text(text):
    """Parse configuration text into a validated :class:`RunConfig`."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigParseError("expected 'key = value'", line=lineno)
        key, raw = (p.strip() for p in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigParseError("unknown key", line=lineno, key=key)
        if key in values:
            raise ConfigParseError("duplicate key", line=lineno, key=key)
        if not raw:
            raise ConfigParseError("missing value", line=lineno, key=key)
        values[key] = _convert(key, raw, lineno)
    cfg = RunConfig(**{_FIELDS[k].name: v for k, v in values.items()})
    validate(cfg)
    return cfg


def parse_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigParseError
        Malformed line, unknown or duplicate key (with line and key context).
    ConfigValidationError
        Listing every out-of-range value.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text)


def validate(cfg):
    bad = []
    if cfg.omega_shape not in ("ball", "box"):
        bad.append(f"omega.shape must be 'ball' or 'box', got {cfg.omega_shape!r}")
    if not cfg.omega_radius > 0:
        bad.append("omega.radius must be positive")
    if len(cfg.omega_center) != 3:
        bad.append("omega.center needs three components")
    if len(cfg.omega_half_widths) != 3 or not all(h > 0 for h in cfg.omega_half_widths):
        bad.append("omega.half_widths needs three positive components")
    if cfg.k_max < 0:
        bad.append("k_max must be nonnegative")
    if cfg.N0 < 8:
        bad.append("N0 must be at least 8")
    if not 0 <= cfg.deficit_target < 1:
        bad.append("deficit_target must lie in [0, 1)")
    if not cfg.r_max > 0:
        bad.append("r_max must be positive")
    if not 0 < cfg.margin < 0.25:
        bad.append("margin must lie in (0, 0.25)")
    if not cfg.kappa > 0:
        bad.append("kappa must be positive")
    for name in ("grid_energy", "grid_ball_probes", "grid_mollify_outer", "grid_mollify_inner",
                 "grid_weak", "grid_snapshot", "weak_trials"):
        if getattr(cfg, name) < 1:
            bad.append(f"{_key(name)} must be at least 1")
    if cfg.grid_global_probes < 0:
        bad.append("grid.global_probes must be nonnegative")
    if cfg.retries < 0:
        bad.append("retries must be nonnegative")
    if cfg.seed < 0:
        bad.append("seed must be nonnegative")
    if not cfg.output_slices:
        bad.append("output.slices needs at least one time")
    if not all(np.isfinite(v) for v in (*cfg.omega_center, *cfg.omega_half_widths, *cfg.output_slices,
                                        cfg.omega_radius, cfg.deficit_target, cfg.r_max, cfg.margin, cfg.kappa)):
        bad.append("all numeric values must be finite")
    if bad:
        raise ConfigValidationError(bad)
    return cfg


def _format(v):
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def emit_config(cfg):
    """Configuration text that parses back to ``cfg``."""
    return "".join(f"{_key(f.name)} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def threads_from_env(environ=None):
    """Value of WILDCURRENTS_THREADS (0 = automatic).

    The iteration itself is sequential and all reductions run in a fixed
    order, so the setting only bounds the worker count and never changes
    results.
    """
    raw = (os.environ if environ is None else environ).get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigValidationError([f"{THREADS_ENV} must be an integer, got {raw!r}"]) from None
    if n < 0:
        raise ConfigValidationError([f"{THREADS_ENV} must be nonnegative"])
    return n


# ----------------------------------------------------------------------------
# outputs

METRIC_COLUMNS = (
    "k", "energy", "deficit", "growth_l1", "growth_rhs", "energy_gain", "beta_bound",
    "stress_residual", "flux_residual", "shell_residual", "linear_s33", "linear_div",
    "weak_momentum", "weak_incompressibility", "weak_tracer",
    "weak_linear_momentum", "weak_linear_incompressibility", "weak_linear_tracer",
    "eta", "mollify_32", "mollify_35", "balls", "dropped", "skipped", "radius",
    "N_min", "N_max", "probe_failures",
)


def _write(path, data, mode="w"):
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None


def _num(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def metrics_csv(rows):
    import io as _io

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([_num(r.get(c, 0.0)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def slice_grid(omega, n, t):
    lo, hi = omega.bounds
    x1 = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    x2 = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    X2, X1 = np.meshgrid(x2, x1, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel(), np.full(n * n, float(t))], 1)
    return pts, (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


def snapshot(z, omega, n, t):
    """(n, n, 4) array of (v1, v2, b, q) on the slice at time ``t``; rows
    index x2 and columns x1."""
    pts, bounds = slice_grid(omega, n, t)
    S = z.evaluate(pts) if len(z.field) else np.zeros((len(pts), 8))
    S[~omega.contains(pts)] = 0.0
    return S[:, [IV1, IV2, IB, IQ]].reshape(n, n, 4), bounds


def pgm_bytes(img, lo, hi, label):
    """8-bit binary greymap with a linear map lo -> 0, hi -> 255."""
    span = hi - lo if hi > lo else 1.0
    q = np.clip(np.rint((img - lo) / span * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    header = f"P5\n# {label}: linear scale, 0 = {lo!r}, 255 = {hi!r}\n{w} {h}\n255\n"
    return header.encode("ascii") + q[::-1].tobytes()


def emit_outputs(report, z, config, out_dir=None):
    """Write metrics.csv, snapshots with JSON sidecars, PGM heatmaps,
    manifest.json and timings.json into ``out_dir``.

    Returns
    -------
    list of Path
        The files written.
    """
    from . import __version__

    out = Path(out_dir or config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(out, exc.strerror or str(exc)) from None
    written = []

    def put(name, data, mode="w"):
        p = out / name
        _write(p, data, mode)
        written.append(p)

    put("metrics.csv", metrics_csv(report.rows))
    omega = config.omega
    n = config.grid_snapshot
    for i, t in enumerate(config.output_slices):
        arr, bounds = snapshot(z, omega, n, t)
        stem = f"snapshot_{i:03d}"
        put(stem + ".bin", arr.astype("<f8").tobytes(), "wb")
        side = {
            "grid_shape": [n, n],
            "channels": ["v1", "v2", "b", "q"],
            "layout": "row-major, rows = x2, columns = x1, channel fastest",
            "dtype": "float64",
            "byte_order": "little",
            "bounds": {"x1": list(bounds[:2]), "x2": list(bounds[2:])},
            "time": float(t),
        }
        put(stem + ".json", json.dumps(side, indent=2, sort_keys=True) + "\n")
        speed = np.hypot(arr[..., 0], arr[..., 1])
        put(f"heatmap_speed_{i:03d}.pgm", pgm_bytes(speed, 0.0, 1.0, f"|v| at t = {t!r}"), "wb")
        put(f"heatmap_b_{i:03d}.pgm", pgm_bytes(arr[..., 2], -1.0, 1.0, f"b at t = {t!r}"), "wb")
    digests = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in written}
    consts = dict(report.constants)
    manifest = {
        "library": "wildcurrents",
        "version": __version__,
        "seed": config.seed,
        "config": config.as_dict(),
        "constants": {k: consts[k] for k in ("C", "alpha", "alpha_rel", "beta")},
        "derivation": consts["derivation"],
        "iterations": len(report.rows) - 1,
        "mollifier_table": report.mollifier_table,
        "files": digests,
        "timings_file": "timings.json",
    }
    put("manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    put("timings.json", json.dumps({"wall_clock_seconds": report.timings}, indent=2, sort_keys=True) + "\n")
    return written


# ----------------------------------------------------------------------------
# command line


def build_parser():
    p = argparse.ArgumentParser(
        prog="wildcurrents",
        description="Run the convex-integration iteration and write metrics, snapshots and a manifest.",
    )
    p.add_argument("--config", metavar="PATH", help="configuration file (key = value lines)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--k-max", type=int, help="number of iterations")
    p.add_argument("--grid", type=int, help="snapshot resolution per axis")
    p.add_argument("--seed", type=int, help="seed for all quasi-random rules")
    p.add_argument("--slices", metavar="T0,T1,...", help="comma-separated snapshot times")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return p


def config_from_args(args):
    cfg = parse_config(args.config) if args.config else RunConfig()
    over = {}
    if args.out is not None:
        over["output_dir"] = args.out
    if args.k_max is not None:
        over["k_max"] = args.k_max
    if args.grid is not None:
        over["grid_snapshot"] = args.grid
    if args.seed is not None:
        over["seed"] = args.seed
    if args.slices is not None:
        try:
            over["output_slices"] = tuple(float(s) for s in args.slices.split(",") if s.strip())
        except ValueError:
            raise ConfigParseError(f"cannot read {args.slices!r} as times", key="--slices") from None
    return validate(replace(cfg, **over))


def main(argv=None):
    """Entry point; returns 0 on success, 1 on invalid input, 2 on runtime failure."""
    from .scheme import run

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        threads = threads_from_env()
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"wildcurrents: invalid configuration: {exc}", file=sys.stderr)
        return 1
    try:
        t0 = time.perf_counter()
        report = run(cfg.settings())
        report.timings["threads_requested"] = threads
        emit_outputs(report, report.subsolution, cfg)
        log.info("finished in %.1f s", time.perf_counter() - t0)
    except (WildCurrentsError, OSError) as exc:
        print(f"wildcurrents: run failed: {exc}", file=sys.stderr)
        return 2
    last = report.rows[-1]
    print(f"k={last['k']} energy={last['energy']:.6f} deficit={last['deficit']:.6f} -> {cfg.output_dir}")
    return 0
