"""Command-line front end.

Subcommands: lattice, classify, flow, relation, certify (data emitters) and
report (renders figures from previously emitted data files).  A single JSON
config file describes the run; --lambda, --seed, --output, --format
override it.  Identical config and seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .arrangement import lattice_from_json, lattice_report
from .broken import BreakPolicy, time_pi_relation
from .errors import BrokenflowError
from .flow import (
    FlowConfig,
    ScCovector,
    full_free_trajectory,
    integrate_bichar,
    reparametrize,
    segment_records,
)
from .phasespace import (
    chart_at,
    classify,
    compress,
    covectors_from_csv,
    covectors_from_json,
)
from .symbols import SymbolContext, certify_positivity, check_constraints, measure_constants


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    with open(args.config) as handle:
        return json.load(handle)


def _resolve_lattice(config):
    arrangement = config.get("arrangement")
    if arrangement is None:
        raise BrokenflowError("config lacks an 'arrangement' entry")
    return lattice_from_json(arrangement)


def _write_output(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as handle:
            handle.write(text)


def cmd_lattice(args) -> int:
    config = _load_config(args)
    lattice = _resolve_lattice(config)
    report = lattice_report(lattice)
    if args.format == "json":
        _write_output(json.dumps(report, indent=2, sort_keys=True) + "\n",
                      args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "dim", "cluster_rank", "origin"])
        for member in report["members"]:
            writer.writerow([member["name"], member["dim"],
                             member["cluster_rank"], member["origin"]])
        _write_output(buf.getvalue(), args.output)
    print(f"{report['n_body_rank']}-body arrangement, "
          f"{len(report['members'])} members "
          f"({len(report['auto_added'])} auto-added: "
          f"{report['auto_added']})", file=sys.stderr)
    return 0


def cmd_classify(args) -> int:
    config = _load_config(args)
    lattice = _resolve_lattice(config)
    lam = args.lam if args.lam is not None else config.get("lambda", 1.0)
    section = config.get("classify", {})
    source = section.get("covectors")
    if isinstance(source, str):
        with open(source) as handle:
            text = handle.read()
        covecs = (covectors_from_json(text) if source.endswith(".json")
                  else covectors_from_csv(text))
    else:
        covecs = [ScCovector.build(c["omega"], c["tau"], c["v"],
                                   project=False)
                  for c in source]
    rows = []
    for xi in covecs:
        zeta = compress(xi, lattice)
        cls = classify(zeta, lam, tol=section.get("tol", 1e-9))
        rows.append({
            "face": zeta.face.name,
            "label": cls.label.value,
            "margin": cls.margin,
            "tau": xi.tau,
            "htilde": zeta.htilde,
        })
    if args.format == "json":
        _write_output(json.dumps(rows, indent=2, sort_keys=True,
                                 default=float) + "\n", args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["face", "label", "margin", "tau", "htilde"])
        for row in rows:
            writer.writerow([row["face"], row["label"], _fmt(row["margin"]),
                             _fmt(row["tau"]), _fmt(row["htilde"])])
        _write_output(buf.getvalue(), args.output)
    return 0


def cmd_flow(args) -> int:
    config = _load_config(args)
    lattice = _resolve_lattice(config) if "arrangement" in config else None
    lam = args.lam if args.lam is not None else config.get("lambda", 1.0)
    section = config.get("flow", {})
    start_doc = section.get("start")
    if start_doc is None:
        raise BrokenflowError("config lacks a 'flow.start' covector")
    start = ScCovector.build(start_doc["omega"], start_doc["tau"],
                             start_doc["v"], project=False)
    fc = FlowConfig(
        lam,
        integrator=section.get("integrator", "analytic"),
        step=section.get("step", 1e-3),
        max_time=section.get("max_time", 2.0),
        n_samples=section.get("n_samples", 401),
    )
    if section.get("full", False):
        segment = full_free_trajectory(start, fc,
                                       horizon=section.get("max_time", 25.0))
    else:
        segment = integrate_bichar(start, fc)
    records = segment_records(segment, lattice)
    n = start.dim
    if args.format == "json":
        _write_output(json.dumps(records, indent=2, sort_keys=True,
                                 default=float) + "\n", args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = (["t", "s"] + [f"omega_{i + 1}" for i in range(n)]
                  + ["tau"] + [f"v_{i + 1}" for i in range(n)] + ["face"])
        writer.writerow(header)
        for rec in records:
            writer.writerow(
                [_fmt(rec["t"]), _fmt(rec["s"])]
                + [_fmt(x) for x in rec["omega"]]
                + [_fmt(rec["tau"])]
                + [_fmt(x) for x in rec["v"]]
                + [rec["face"]]
            )
        _write_output(buf.getvalue(), args.output)
    if section.get("geodesic", False):
        geo = reparametrize(segment)
        geo_rows = [
            {"s": float(geo.s[i]), "s1": float(geo.s1),
             "position": geo.position[i].tolist(),
             "direction": geo.direction[i].tolist()}
            for i in range(len(geo.s))
        ]
        if args.output and args.output != "-":
            stem, dot, ext = args.output.rpartition(".")
            geo_path = f"{stem or ext}_geodesic.{ext if dot else args.format}"
        else:
            geo_path = None
        if args.format == "json":
            _write_output(json.dumps(geo_rows, indent=2, sort_keys=True,
                                     default=float) + "\n", geo_path)
        else:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["s", "s1"]
                            + [f"position_{i + 1}" for i in range(n)]
                            + [f"direction_{i + 1}" for i in range(n)])
            for row in geo_rows:
                writer.writerow([_fmt(row["s"]), _fmt(row["s1"])]
                                + [_fmt(x) for x in row["position"]]
                                + [_fmt(x) for x in row["direction"]])
            _write_output(buf.getvalue(), geo_path)
    return 0


def cmd_relation(args) -> int:
    config = _load_config(args)
    lattice = _resolve_lattice(config)
    section = config.get("relation", {})
    source = section.get("source")
    if source is None:
        raise BrokenflowError("config lacks a 'relation.source' entry")
    p = np.asarray(source["point"], dtype=float)
    u = np.asarray(source["direction"], dtype=float)
    p = p / np.linalg.norm(p)
    u = u - (p @ u) * p
    u = u / np.linalg.norm(u)
    policy = BreakPolicy(
        max_breaks=section.get("max_breaks", 3),
        normal_samples=section.get("normal_samples", 8),
        tol=section.get("tolerance", 1e-10),
    )
    relation = time_pi_relation(p, u, lattice, policy)
    doc = relation.to_json_dict()
    if args.format == "json":
        _write_output(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                      args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n = len(p)
        header = ([f"point_{i + 1}" for i in range(n)]
                  + [f"direction_{i + 1}" for i in range(n)]
                  + ["signature", "length", "truncated"])
        writer.writerow(header)
        for tgt in doc["targets"]:
            writer.writerow(
                [_fmt(x) for x in tgt["point"]]
                + [_fmt(x) for x in tgt["direction"]]
                + ["|".join(tgt["signature"]), _fmt(tgt["length"]),
                   str(tgt["truncated"]).lower()]
            )
        _write_output(buf.getvalue(), args.output)
    return 0


def cmd_certify(args) -> int:
    config = _load_config(args)
    lattice = _resolve_lattice(config)
    lam = args.lam if args.lam is not None else config.get("lambda", 1.0)
    section = config.get("certify", {})
    family = section.get("family", "tangential")
    center = section.get("center")
    if center is None:
        raise BrokenflowError("config lacks a 'certify.center' entry")
    face = lattice.face(center["face"])
    chart = chart_at(lattice, face, np.asarray(center["point"], dtype=float))
    ctx = SymbolContext(
        lam, chart,
        tau0=float(center["tau0"]),
        nu0=np.asarray(center["nu0"], dtype=float),
        eps=section.get("eps", 0.5),
        delta=section.get("delta", 0.02),
        A0=section.get("A0", 8.0),
        beta=section.get("beta"),
        t_shrink=section.get("t_shrink", 0.5),
    )
    # Validate constraints before sampling; refuse with a diagnostic.
    measure_constants(ctx, family, seed=args.seed + 1)
    violations = check_constraints(ctx, family)
    if violations:
        print("constraint violation(s), refusing to sample:",
              file=sys.stderr)
        for v in violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    cert = certify_positivity(family, ctx, section.get("samples", 10000),
                              seed=args.seed,
                              threads=section.get("threads", 1))
    _write_output(json.dumps(cert.to_json_dict(), indent=2, sort_keys=True,
                             default=float) + "\n", args.output)
    print(f"certificate: {'PASS' if cert.passed else 'FAIL'} "
          f"(min {cert.min_value:.6g} vs threshold {cert.threshold:.6g})",
          file=sys.stderr)
    return 0 if cert.passed else 1


def cmd_report(args) -> int:
    from . import report as report_mod

    written = report_mod.render(args.kind, args.input, args.output_dir)
    for path in written:
        print(path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="brokenflow",
        description="Broken geodesic flows, the time-pi relation, and "
                    "positivity certificates on subspace arrangements.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="energy parameter override")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for every sampler (default 0)")
        p.add_argument("--output", default=None,
                       help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="json")

    for name, func in (("lattice", cmd_lattice), ("classify", cmd_classify),
                       ("flow", cmd_flow), ("relation", cmd_relation),
                       ("certify", cmd_certify)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=func)

    p_rep = sub.add_parser("report", help="render figures from emitted data")
    p_rep.add_argument("--kind", choices=("flow", "relation", "certificate"),
                       required=True)
    p_rep.add_argument("--input", required=True, help="data file to render")
    p_rep.add_argument("--output-dir", default=".",
                       help="directory for figure files")
    p_rep.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
