"""Command-line harness: ``scenario``, ``register``, ``sweep``, ``inspect-tensors``.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .core import mrms, rotation_geodesic_error
from .dataset import (FORMATS, add_noise, default_hole_center, load_cloud, make_rotated_scenario,
                      noise_from_percent, punch_hole, read_manifest, subsample_step, write_manifest)
from .pipeline import ALGORITHMS, RegistrationConfig, compute_descriptors, register

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SWEEP_ALGORITHMS = ("ICP-CTSF", "SWC-ICP", "ICP-LIE-0", "ICP-LIE-1", "SWC-LIE-0", "SWC-LIE-1")
SWEEP_K = (5.0, 10.0, 25.0, 50.0, 75.0)
_CONFIG_FIELDS = {f.name for f in fields(RegistrationConfig)}


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """15 significant digits; integers and text pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.15g}"
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _floats_list(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


# -- config precedence: flags > manifest "config" > defaults ------------------


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("registration options")
    g.add_argument("--tau", type=float)
    g.add_argument("--w0", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--m0", type=int)
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--phi-max", type=float, help="cone half-angle in radians")
    g.add_argument("--rel-tol", type=float)
    g.add_argument("--abs-tol", type=float, help="improvement floor relative to the squared target extent")
    g.add_argument("--direction", choices=("native", "target", "source"))
    g.add_argument("--eps-rel", type=float)
    g.add_argument("--reverse-votes", action="store_true", default=None)
    g.add_argument("--normalize-trace", action="store_true", default=None)
    g.add_argument("--tensor-prescale", action="store_true", default=None)
    g.add_argument("--refresh-field", action="store_true", default=None)
    g.add_argument("--ctsf-shape-relation", dest="lie_shape_relation", action="store_false", default=None,
                   help="SWC-LIE: keep the CTSF shape relation instead of the Lie one")


def _overrides(args) -> dict:
    return {k: v for k, v in vars(args).items() if k in _CONFIG_FIELDS and v is not None}


def _merge_config(doc: dict, flags: dict, **fixed) -> dict:
    merged = {}
    manifest_cfg = doc.get("config") or {}
    unknown = set(manifest_cfg) - _CONFIG_FIELDS
    if unknown:
        raise UsageError(f"manifest config has unknown keys: {sorted(unknown)}")
    merged.update(manifest_cfg)
    merged.update(flags)
    merged.update(fixed)
    return merged


def _make_config(values: dict) -> RegistrationConfig:
    try:
        return RegistrationConfig(**values)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None


# -- run summaries ------------------------------------------------------------


def summarize(scn, report) -> dict:
    """Errors against ground truth; ``final_mrms`` uses the known correspondence when present."""
    T = report.final_transform
    gt = scn.ground_truth
    out = {
        "matched_mrms": report.final_mrms,
        "rotation_error_deg": math.degrees(rotation_geodesic_error(T.R, gt.R)),
        "translation_error": float(np.linalg.norm(T.t - gt.t)),
        "iterations": report.iterations_used,
        "converged": report.converged,
        "degenerate": report.degenerate,
        "w0": report.w0,
    }
    if scn.correspondence is not None and len(scn.correspondence):
        X, Y = scn.gt_pairs()
        out["final_mrms"] = mrms(X, Y, T)
    else:
        out["final_mrms"] = report.final_mrms
    return out


def _json_ready(d):
    if isinstance(d, dict):
        return {k: _json_ready(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_json_ready(v) for v in d]
    if isinstance(d, (float, np.floating)):
        return float(fmt(d)) if math.isfinite(d) else None
    if isinstance(d, np.integer):
        return int(d)
    return d


# -- commands -----------------------------------------------------------------


def cmd_scenario(args) -> int:
    cloud = load_cloud(args.input, args.format)
    cloud = subsample_step(cloud, args.step)
    base = make_rotated_scenario(cloud, args.angle, args.axis)
    extra = {"step": args.step, "angle_deg": args.angle, "axis": args.axis}
    written = [write_manifest(base, args.out, "original", args.cloud_format, extra)]
    if args.hole_radius is not None:
        center = default_hole_center(base.target) if args.hole_center is None else \
            np.array(_floats_list(args.hole_center, "--hole-center"))
        if center.shape != (3,):
            raise UsageError("--hole-center needs three numbers")
        hole = punch_hole(base, center, args.hole_radius)
        written.append(write_manifest(hole, args.out, "hole", args.cloud_format,
                                      dict(extra, hole_center=center.tolist(), hole_radius=args.hole_radius)))
    if args.noise_percent is not None:
        spec = noise_from_percent(base, args.noise_percent, args.seed, args.noise_absolute)
        noisy = add_noise(base, spec)
        written.append(write_manifest(noisy, args.out, "noise", args.cloud_format,
                                      dict(extra, noise_nu=spec.nu, noise_percent=args.noise_percent,
                                           noise_absolute=args.noise_absolute, seed=args.seed)))
    for p in written:
        print(p)
    return EXIT_OK


def cmd_register(args) -> int:
    scn, doc = read_manifest(args.manifest)
    values = _merge_config(doc, _overrides(args), algorithm=args.algorithm, k_percent=args.k)
    cfg = _make_config(values)
    report = register(scn.source, scn.target, cfg)
    summary = summarize(scn, report)
    summary["manifest"] = str(args.manifest)
    summary["tag"] = scn.descriptor_tag
    summary["config"] = cfg.to_dict()
    rows = [(r.iteration, r.mrms, r.w_m, r.matches) for r in report.per_iteration]
    table = _csv_text(("iteration", "mrms", "w_m", "matches"), rows)
    text = json.dumps(_json_ready(summary), indent=1, sort_keys=True) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or f"{Path(args.manifest).stem}_{cfg.algorithm}_k{fmt(cfg.k_percent)}"
    (out / f"{stem}.csv").write_text(table, encoding="utf-8")
    (out / f"{stem}.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _strategy_of(alg: str) -> str:
    return alg[-1] if "LIE" in alg else "-"


def _sweep_group(task):
    """All algorithms for one (manifest, k): one tensor-field pass per cloud."""
    manifest, k, algorithms, flags = task
    rows = []
    try:
        scn, doc = read_manifest(manifest)
        base = _merge_config(doc, flags, k_percent=k)
    except Exception as e:  # recorded, sweep continues
        return [(manifest, "?", alg, k, None, None, None, f"error: {e}") for alg in algorithms]
    tag = scn.descriptor_tag
    dP = dQ = None
    for alg in algorithms:
        try:
            cfg = RegistrationConfig(**dict(base, algorithm=alg))
            if cfg.uses_shape and dP is None:
                dP = compute_descriptors(scn.source.points, cfg)
                dQ = compute_descriptors(scn.target.points, cfg)
            rep = register(scn.source, scn.target, cfg, dP, dQ)
            s = summarize(scn, rep)
            rows.append((manifest, tag, alg, k, s["final_mrms"], s["rotation_error_deg"], s["iterations"], "ok"))
        except Exception as e:
            msg = " ".join(str(e).split())
            rows.append((manifest, tag, alg, k, None, None, None, f"error: {msg}"))
    return rows


def run_sweep(manifests, algorithms, ks, flags, jobs: int = 1) -> str:
    """Run the grid and return the CSV text (rows sorted by scenario, algorithm, k)."""
    tasks = [(str(m), float(k), tuple(algorithms), flags) for m in manifests for k in ks]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            groups = list(ex.map(_sweep_group, tasks))
    else:
        groups = [_sweep_group(t) for t in tasks]
    rows = [r for g in groups for r in g]
    rows.sort(key=lambda r: (r[0], r[2], r[3]))
    # best per (strategy, scenario): shared algorithms compete in both strategy groups
    best: dict[tuple, tuple] = {}
    for i, r in enumerate(rows):
        if r[7] != "ok":
            continue
        strat = _strategy_of(r[2])
        for s in (("0", "1") if strat == "-" else (strat,)):
            key = (s, r[0])
            if key not in best or r[4] < best[key][0]:
                best[key] = (r[4], i)
    marks = {}
    for (s, _), (_, i) in sorted(best.items()):
        marks.setdefault(i, []).append(s)
    out = []
    for i, r in enumerate(rows):
        manifest, tag, alg, k, final, rot, its, status = r
        out.append((_strategy_of(alg), tag, Path(manifest).name, alg, k,
                    "" if final is None else final, "" if rot is None else rot,
                    "" if its is None else its, status, "|".join(marks.get(i, []))))
    header = ("strategy", "scenario", "manifest", "algorithm", "k", "final_mrms",
              "rotation_error_deg", "iterations", "status", "best")
    return _csv_text(header, out)


def cmd_sweep(args) -> int:
    algorithms = args.algorithms.split(",") if args.algorithms else list(SWEEP_ALGORITHMS)
    for a in algorithms:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}")
    ks = _floats_list(args.k, "--k") if args.k else list(SWEEP_K)
    if not algorithms or not ks or not args.manifest:
        raise UsageError("algorithms, k values and manifests must be nonempty")
    flags = _overrides(args)
    _make_config(dict(flags, algorithm=algorithms[0], k_percent=ks[0]))  # validate flags early
    text = run_sweep(args.manifest, algorithms, ks, flags, args.jobs)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.manifest:
        scn, _ = read_manifest(args.manifest)
        cloud = scn.source if args.which == "source" else scn.target
    elif args.input:
        cloud = load_cloud(args.input, args.format)
    else:
        raise UsageError("give --in or --manifest")
    cfg = _make_config(dict(_overrides(args), k_percent=args.k))
    d = compute_descriptors(cloud.points, cfg)
    T12 = d.T12(cloud.points)
    header = (["index", "x", "y", "z", "l1", "l2", "l3"]
              + [f"T11_{i}{j}" for i in range(3) for j in range(3)] + ["T12_0", "T12_1", "T12_2"])
    rows = [[i, *cloud.points[i], *d.eigenvalues[i], *d.T11[i].reshape(9), *T12[i]] for i in range(len(cloud))]
    text = _csv_text(header, rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lieicp", description="Rigid point-cloud registration with tensor-shape cues.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scenario", help="build original / hole / noise scenarios from a cloud")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=FORMATS)
    s.add_argument("--out", required=True)
    s.add_argument("--step", type=int, default=1)
    s.add_argument("--angle", type=float, default=45.0)
    s.add_argument("--axis", default="y", help="x, y, z or three comma-separated numbers")
    s.add_argument("--hole-center", help="x,y,z (default: target point nearest the centroid)")
    s.add_argument("--hole-radius", type=float)
    s.add_argument("--noise-percent", type=float, help="nu as a percentage of the target bounding-box diagonal")
    s.add_argument("--noise-absolute", action="store_true", help="read --noise-percent as raw units")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cloud-format", choices=FORMATS, default="xyz")
    s.set_defaults(func=cmd_scenario)

    r = sub.add_parser("register", help="run one algorithm on a scenario manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--algorithm", required=True)
    r.add_argument("--k", type=float, default=10.0, help="neighbourhood size in percent")
    r.add_argument("--out", default=".")
    r.add_argument("--name", help="output file stem")
    _add_config_flags(r)
    r.set_defaults(func=cmd_register)

    w = sub.add_parser("sweep", help="algorithm x k x scenario grid")
    w.add_argument("--manifest", nargs="+", required=True)
    w.add_argument("--algorithms", help="comma-separated tags (default: the six shape-aware variants)")
    w.add_argument("--k", help="comma-separated percentages (default 5,10,25,50,75)")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out")
    _add_config_flags(w)
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("inspect-tensors", help="per-point eigenvalues and embeddings as CSV")
    t.add_argument("--in", dest="input")
    t.add_argument("--format", choices=FORMATS)
    t.add_argument("--manifest")
    t.add_argument("--which", choices=("source", "target"), default="source")
    t.add_argument("--k", type=float, default=10.0)
    t.add_argument("--out")
    _add_config_flags(t)
    t.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as e:
        print(f"{parser.prog}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
