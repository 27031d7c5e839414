"""Reproducible experiment runner.

One experiment per subcommand, each driven by an ExperimentConfig that can
come from a JSON file (--config) with individual fields overridable on the
command line.  Every run writes a results file (CSV or JSON) plus a
manifest recording the config hash, master seed, package version, and wall
time; rows carry the master seed and the stream index that produced them,
so parallel and serial reruns agree byte for byte.

Exit codes: 0 success, 1 experiment failure, 2 config validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, harmonic, sde, wilson
from .acceptance import SUITES, run_suite
from .continuum import annulus_det_series, fit_power_law, hitting_gof_test, MarkedAnnulus
from .lattice import build_annulus, build_square_annulus, build_zipper, ccw_order
from .loopsoup import LoopSoupSampler, campbell_cf_mc
from .seeds import stream_generator


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    outer_radius: float = 20.0
    inner_radius: float = 0.0
    inner_angles: tuple = (0.0, math.pi)
    outer_angles: tuple = ()
    seed: int = 1
    samples: int = 1000
    dt: float = 1e-3
    t_end: float = 1.0
    beta: float = 0.0
    kappa: float = 2.0
    n: int = 2
    tolerance: float = 1e-10
    out: str = "results"
    format: str = "csv"

    _BLOCKS = {
        "domain": ("outer_radius", "inner_radius"),
        "marked": ("inner_angles", "outer_angles"),
        "run": ("seed", "samples", "dt", "t_end", "beta", "kappa", "n", "tolerance"),
        "output": ("out", "format"),
    }

    @classmethod
    def from_document(cls, experiment: str, doc: dict) -> "ExperimentConfig":
        cfg = cls(experiment=experiment)
        known_blocks = set(cls._BLOCKS)
        for block, values in doc.items():
            if block == "experiment":
                if values != experiment:
                    raise ConfigError(
                        f"config is for experiment {values!r}, not {experiment!r}"
                    )
                continue
            if block not in known_blocks:
                raise ConfigError(f"unknown config block {block!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config block {block!r} must be an object")
            for key, val in values.items():
                if key not in cls._BLOCKS[block]:
                    raise ConfigError(f"unknown key {key!r} in block {block!r}")
                if key in ("inner_angles", "outer_angles"):
                    val = tuple(float(a) for a in val)
                setattr(cfg, key, val)
        cfg.validate()
        return cfg

    def validate(self):
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.dt <= 0 or self.t_end <= 0:
            raise ConfigError("dt and t_end must be positive")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.outer_radius < self.inner_radius + 2:
            raise ConfigError("outer_radius must exceed inner_radius + 2")

    def document(self) -> dict:
        doc = {"experiment": self.experiment}
        for block, keys in self._BLOCKS.items():
            doc[block] = {k: getattr(self, k) for k in keys}
        return doc


# ---------------------------------------------------------------------------
# Output plumbing


def _write_rows(cfg: ExperimentConfig, rows: list, summary: dict, t0: float) -> str:
    base = cfg.out
    doc = cfg.document()
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    manifest = {
        "experiment": cfg.experiment,
        "config": doc,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "master_seed": int(cfg.seed),
        "version": f"ustwind-{__version__}",
        "wall_time_s": round(time.time() - t0, 3),
        "rows": len(rows),
        "summary": summary,
    }
    if cfg.format == "json":
        path = f"{base}.json"
        with open(path, "w") as fh:
            json.dump({"rows": rows, "summary": summary}, fh, indent=1, default=_jsonify)
            fh.write("\n")
    else:
        path = f"{base}.csv"
        with open(path, "w") as fh:
            if rows:
                header = list(rows[0])
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(_cell(row[k]) for k in header) + "\n")
    with open(f"{base}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, default=_jsonify)
        fh.write("\n")
    return path


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return str(v)


def _jsonify(v):
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return str(v)


# ---------------------------------------------------------------------------
# Experiment implementations


def _marked_vertices(cfg, lat):
    """Resolve marked angles to inner-boundary vertices, canonically ordered."""
    inner = ccw_order(lat, lat.inner_boundary)
    angles = lat.angles(inner)
    xs = []
    for a in cfg.inner_angles[: cfg.n] if cfg.inner_angles else []:
        k = int(np.argmin(np.abs(np.angle(np.exp(1j * (angles - a))))))
        xs.append(int(inner[k]))
    if len(set(xs)) != len(xs):
        raise ConfigError("marked angles resolve to duplicate inner vertices")
    return ccw_order(lat, xs)


def _outer_targets(cfg, lat):
    outer = ccw_order(lat, lat.outer_boundary)
    angles = lat.angles(outer)
    vs = []
    for a in cfg.outer_angles:
        k = int(np.argmin(np.abs(np.angle(np.exp(1j * (angles - a))))))
        vs.append(int(outer[k]))
    return ccw_order(lat, vs) if vs else None


def run_verify_fomin(cfg):
    """Exact-identity check on the oracle lattice; ignores the domain block."""
    lat = build_square_annulus(2, 0)
    zipper = build_zipper(lat)
    trees, count = wilson.enumerate_spanning_trees(lat)
    from .acceptance import _oracle_marks

    rows = []
    worst = 0.0
    for n in (1, 2, 3):
        xs, vs = _oracle_marks(lat, n)
        for beta in (0.0, 0.7, math.pi / 3, math.pi):
            bf = wilson.brute_force_winding_cf(lat, zipper, beta, xs, vs, trees=trees)
            ex = harmonic.winding_cf_exact(lat, zipper, beta, xs, vs)
            worst = max(worst, abs(bf - ex))
            rows.append(
                {
                    "seed": cfg.seed,
                    "stream": 0,
                    "n": n,
                    "beta": beta,
                    "brute_re": bf.real,
                    "brute_im": bf.imag,
                    "exact_re": ex.real,
                    "exact_im": ex.imag,
                    "abs_diff": abs(bf - ex),
                }
            )
    summary = {"max_abs_diff": worst, "trees": count, "passed": bool(worst <= 1e-8)}
    return rows, summary, 0 if worst <= 1e-8 else 1


def run_winding_cf(cfg):
    lat = build_annulus(cfg.outer_radius, cfg.inner_radius)
    zipper = build_zipper(lat)
    xs = _marked_vertices(cfg, lat)
    rng = stream_generator(cfg.seed, 0)
    est, se, kept, attempts = wilson.winding_cf_mc(
        lat, zipper, cfg.beta, xs, rng, cfg.samples
    )
    ex = None
    vs = _outer_targets(cfg, lat)
    if vs is not None:
        ex = harmonic.winding_cf_exact(lat, zipper, cfg.beta, xs, vs)
    row = {
        "seed": cfg.seed,
        "stream": 0,
        "beta": cfg.beta,
        "mc_re": est.real,
        "mc_im": est.imag,
        "stderr_re": se[0],
        "stderr_im": se[1],
        "exact_re": ex.real if ex is not None else float("nan"),
        "exact_im": ex.imag if ex is not None else float("nan"),
        "accepted": kept,
        "attempts": attempts,
    }
    return [row], {"acceptance_rate": kept / attempts}, 0


def run_hitting_stats(cfg):
    lat = build_annulus(cfg.outer_radius, cfg.inner_radius)
    xs = _marked_vertices(cfg, lat)
    rng = stream_generator(cfg.seed, 0)
    rows = []
    angles = np.empty((cfg.samples, len(xs)))
    for k in range(cfg.samples):
        tup, att = wilson.sample_conditioned_branches(lat, xs, rng)
        angles[k] = lat.angles(tup.exits)
        rows.append(
            {
                "seed": cfg.seed,
                "stream": 0,
                "draw": k,
                "attempts": att,
                **{f"angle_{j}": float(a) for j, a in enumerate(angles[k])},
            }
        )
    gof = hitting_gof_test(angles, len(xs)) if cfg.samples >= 500 else None
    summary = {
        "samples": cfg.samples,
        "ks": gof.statistic if gof else None,
        "ks_critical_1pct": gof.critical_value if gof else None,
        "passed": bool(gof.passed) if gof else None,
    }
    return rows, summary, 0


def run_loop_soup(cfg):
    half = max(2, int(cfg.outer_radius) // 2)
    lat = build_square_annulus(half, 0)
    zipper = build_zipper(lat)
    sampler = LoopSoupSampler(lat, zipper)
    rng = stream_generator(cfg.seed, 0)
    windings, counts, _ = sampler.sample_batch(cfg.samples, rng)
    rows = []
    for s, w in enumerate(windings):
        classes = {}
        for k in w:
            classes[int(k)] = classes.get(int(k), 0) + 1
        rows.append(
            {
                "seed": cfg.seed,
                "stream": 0,
                "soup": s,
                "loops": int(counts[s]),
                "total_winding": int(np.sum(w)),
                "odd_loops": int((np.abs(w) % 2 == 1).sum()),
                "winding_classes": json.dumps(classes),
            }
        )
    est, se = campbell_cf_mc(windings, cfg.beta)
    target = harmonic.loop_mass_ratio(lat, zipper, cfg.beta, 0.0)
    summary = {
        "campbell_re": est.real,
        "campbell_im": est.imag,
        "stderr_re": se[0],
        "stderr_im": se[1],
        "det_ratio_re": target.real,
        "det_ratio_im": target.imag,
        "truncation_length": sampler.max_len,
        "tail_bound": sampler.tail_bound,
    }
    return rows, summary, 0


def run_exponents(cfg):
    rows = []

    def marks(n, r):
        inner = tuple(2 * math.pi * j / n + 0.3 for j in range(n))
        outer = tuple(2 * math.pi * j / n + 1.1 for j in range(n))
        return MarkedAnnulus(r, inner, outer)

    rs = (1e-2, 1e-3, 1e-4)
    for n, beta, target in ((3, 0.0, 2.0), (2, 0.5, 1.0)):
        vals = [annulus_det_series(marks(n, r), beta) for r in rs]
        ex = fit_power_law(rs, vals)
        rows.append(
            {
                "seed": cfg.seed,
                "stream": 0,
                "quantity": f"series_decay_n{n}",
                "beta": beta,
                "exponent": ex,
                "target": target,
            }
        )
    for n, base in ((1, 0.0), (3, 0.0), (2, 0.5), (4, 0.5)):
        pair = (1e-2, 1e-3)
        vals = [
            abs(annulus_det_series(marks(n, r), base + cfg.beta))
            / abs(annulus_det_series(marks(n, r), base))
            for r in pair
        ]
        rows.append(
            {
                "seed": cfg.seed,
                "stream": 0,
                "quantity": f"cf_det_exponent_n{n}",
                "beta": cfg.beta,
                "exponent": fit_power_law(pair, vals),
                "target": cfg.beta if n % 2 else 0.0,
            }
        )
    return rows, {}, 0


def run_dbm(cfg):
    rng = stream_generator(cfg.seed, 0)
    theta0 = np.arange(cfg.n) * 2 * math.pi / cfg.n
    path = sde.simulate_dbm(cfg.n, cfg.kappa, 2.0, theta0, cfg.t_end, cfg.dt, rng)
    stride = max(1, len(path.times) // 2000)
    rows = [
        {
            "seed": cfg.seed,
            "stream": 0,
            "t": float(path.times[k]),
            **{f"theta_{j}": float(path.thetas[k, j]) for j in range(cfg.n)},
        }
        for k in range(0, len(path.times), stride)
    ]
    return rows, {"kappa": cfg.kappa, "drift": 2.0}, 0


def run_winding_variance(cfg):
    rng = stream_generator(cfg.seed, 0)
    norm, cov = sde.sle_winding_experiment(
        cfg.n, cfg.kappa, cfg.t_end, cfg.samples, rng, cfg.dt
    )
    rows = [
        {
            "seed": cfg.seed,
            "stream": 0,
            "path": k,
            **{f"w_{j}": float(norm[k, j]) for j in range(cfg.n)},
        }
        for k in range(norm.shape[0])
    ]
    summary = {
        "covariance": cov.tolist(),
        "max_dev_from_one": float(np.max(np.abs(cov - 1.0))),
    }
    return rows, summary, 0


def run_gff_check(cfg):
    rng = stream_generator(cfg.seed, 0)
    res = sde.gff_martingale_check(
        cfg.kappa, cfg.n, 0.3 + 0.0j, -0.35 + 0.1j, cfg.t_end, cfg.dt, cfg.samples, rng
    )
    row = {
        "seed": cfg.seed,
        "stream": 0,
        "mean_drift": res.mean_drift,
        "se_drift": res.se_drift,
        "qv_empirical": res.qv_empirical,
        "qv_target": res.qv_target,
        "qv_rel_mismatch": res.qv_rel_mismatch,
        "stopped_fraction": res.stopped_fraction,
    }
    ok = abs(res.mean_drift) <= 3 * res.se_drift and res.qv_rel_mismatch <= 0.05
    return [row], {"passed": bool(ok)}, 0 if ok else 1


def run_trace(cfg):
    rng = stream_generator(cfg.seed, 0)
    theta0 = np.arange(cfg.n) * 2 * math.pi / cfg.n
    path = sde.simulate_dbm(cfg.n, cfg.kappa, 2.0, theta0, cfg.t_end, cfg.dt, rng)
    stride = max(1, len(path.times) // 100)
    traces = sde.trace_points(path.times, path.thetas, stride=stride)
    rows = []
    for j, tr in enumerate(traces):
        for k, z in enumerate(tr):
            rows.append(
                {
                    "seed": cfg.seed,
                    "stream": 0,
                    "curve": j,
                    "t": float(path.times[k * stride]),
                    "re": float(z.real),
                    "im": float(z.imag),
                }
            )
    return rows, {}, 0


EXPERIMENTS = {
    "verify-fomin": run_verify_fomin,
    "winding-cf": run_winding_cf,
    "hitting-stats": run_hitting_stats,
    "loop-soup": run_loop_soup,
    "exponents": run_exponents,
    "dbm": run_dbm,
    "winding-variance": run_winding_variance,
    "gff-check": run_gff_check,
    "trace": run_trace,
}


# ---------------------------------------------------------------------------
# Entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ustwind",
        description="Winding statistics of conditioned spanning-tree branches in annuli",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _common_flags(p)
    pa = sub.add_parser("acceptance")
    pa.add_argument("suite", nargs="?", default="all", choices=sorted(SUITES))
    pa.add_argument("--out", default=None, help="optional JSON report path")
    return parser


def _common_flags(p):
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--outer-radius", dest="outer_radius", type=float, default=None)
    p.add_argument("--inner-radius", dest="inner_radius", type=float, default=None)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "acceptance":
        results = run_suite(args.suite)
        if args.out:
            with open(args.out, "w") as fh:
                json.dump(
                    [
                        {
                            "criterion": r.cid,
                            "title": r.title,
                            "passed": r.passed,
                            "observed": r.observed,
                            "tolerance": r.tolerance,
                            "seconds": r.seconds,
                        }
                        for r in results
                    ],
                    fh,
                    indent=1,
                    default=_jsonify,
                )
                fh.write("\n")
        return 0 if all(r.passed for r in results) else 1

    try:
        doc = {}
        if args.config:
            with open(args.config) as fh:
                doc = json.load(fh)
        cfg = ExperimentConfig.from_document(args.command, doc)
        for key in (
            "seed",
            "samples",
            "out",
            "format",
            "beta",
            "kappa",
            "n",
            "dt",
            "t_end",
            "outer_radius",
            "inner_radius",
        ):
            val = getattr(args, key, None)
            if val is not None:
                setattr(cfg, key, val)
        cfg.validate()
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    t0 = time.time()
    try:
        rows, summary, status = EXPERIMENTS[cfg.experiment](cfg)
    except Exception as exc:  # experiment failure
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    path = _write_rows(cfg, rows, summary, t0)
    print(f"wrote {path} ({len(rows)} rows); summary: {json.dumps(summary, default=_jsonify)}")
    return status


if __name__ == "__main__":
    sys.exit(main())
