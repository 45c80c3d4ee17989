"""Figure rendering for emitted data files.

Reads the delimited outputs of the flow / relation / certify subcommands
and writes matplotlib figures next to them (or into a chosen directory).
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _load_rows(path: str):
    if path.endswith(".json"):
        with open(path) as handle:
            return json.load(handle)
    with open(path) as handle:
        return list(csv.DictReader(handle))


def _out_path(output_dir: str, input_path: str, suffix: str) -> str:
    base = os.path.splitext(os.path.basename(input_path))[0]
    os.makedirs(output_dir, exist_ok=True)
    return os.path.join(output_dir, f"{base}_{suffix}.png")


def render_flow(input_path: str, output_dir: str) -> list[str]:
    rows = _load_rows(input_path)
    if rows and isinstance(rows[0].get("omega"), list):
        t = np.array([r["t"] for r in rows], dtype=float)
        s = np.array([r["s"] for r in rows], dtype=float)
        tau = np.array([r["tau"] for r in rows], dtype=float)
        omega = np.array([r["omega"] for r in rows], dtype=float)
    else:
        t = np.array([float(r["t"]) for r in rows])
        s = np.array([float(r["s"]) for r in rows])
        tau = np.array([float(r["tau"]) for r in rows])
        omega_cols = sorted(
            (k for k in rows[0] if k.startswith("omega_")),
            key=lambda k: int(k.split("_")[1]),
        )
        omega = np.array([[float(r[k]) for k in omega_cols] for r in rows])

    written = []
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].plot(t, tau, lw=1.2)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel(r"$\tau$")
    axes[0].set_title("momentum dual vs flow time")
    axes[1].plot(t, s, lw=1.2)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("arc length s")
    axes[1].set_title("arc length vs flow time")
    fig.tight_layout()
    path = _out_path(output_dir, input_path, "tau_arclength")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig = plt.figure(figsize=(4.4, 4.2))
    if omega.shape[1] >= 3:
        ax = fig.add_subplot(111, projection="3d")
        ax.plot(omega[:, 0], omega[:, 1], omega[:, 2], lw=1.0)
        ax.scatter(*omega[0, :3], color="tab:green", s=25, label="start")
        ax.scatter(*omega[-1, :3], color="tab:red", s=25, label="end")
        ax.set_box_aspect((1, 1, 1))
        ax.legend()
    else:
        ax = fig.add_subplot(111)
        ax.plot(omega[:, 0], omega[:, 1], lw=1.0)
        ax.set_aspect("equal")
    ax.set_title("base-point trajectory (first 3 coordinates)")
    path = _out_path(output_dir, input_path, "trajectory")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def render_relation(input_path: str, output_dir: str) -> list[str]:
    with open(input_path) as handle:
        doc = json.load(handle)
    targets = doc["targets"]
    source = doc["source"]
    pts = np.array([t["point"] for t in targets], dtype=float)
    sigs = ["|".join(t["signature"]) or "(free)" for t in targets]
    uniq = sorted(set(sigs))

    fig = plt.figure(figsize=(5.2, 4.8))
    if pts.shape[1] >= 3:
        ax = fig.add_subplot(111, projection="3d")
        cmap = plt.get_cmap("tab10")
        for i, sig in enumerate(uniq):
            mask = [s == sig for s in sigs]
            sel = pts[np.array(mask)]
            ax.scatter(sel[:, 0], sel[:, 1], sel[:, 2],
                       color=cmap(i % 10), s=18, label=sig)
        ax.scatter(*source["point"][:3], color="black", marker="*", s=60,
                   label="source")
        ax.set_box_aspect((1, 1, 1))
    else:
        ax = fig.add_subplot(111)
        cmap = plt.get_cmap("tab10")
        for i, sig in enumerate(uniq):
            mask = np.array([s == sig for s in sigs])
            ax.scatter(pts[mask, 0], pts[mask, 1], color=cmap(i % 10), s=18,
                       label=sig)
        ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="upper left")
    ax.set_title(f"time-pi relation targets ({len(targets)})")
    path = _out_path(output_dir, input_path, "targets")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def render_certificate(input_path: str, output_dir: str) -> list[str]:
    with open(input_path) as handle:
        doc = json.load(handle)
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    threshold = doc["threshold"]
    min_value = doc["min_value"]
    ax.axvline(threshold, color="tab:red", ls="--",
               label=f"threshold {threshold:.4g}")
    ax.axvline(min_value, color="tab:blue",
               label=f"min scHg phi {min_value:.4g}")
    names = [w["schg_phi"] for w in doc.get("witnesses", [])]
    if names:
        ax.scatter(names, np.zeros(len(names)), color="tab:blue", s=20)
    ax.set_yticks([])
    ax.set_xlabel("scHg(phi) over sampled region")
    verdict = "PASS" if doc["pass"] else "FAIL"
    ax.set_title(f"{doc['family']} family certificate: {verdict} "
                 f"({doc['samples']} samples)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = _out_path(output_dir, input_path, "margin")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def render(kind: str, input_path: str, output_dir: str) -> list[str]:
    if kind == "flow":
        return render_flow(input_path, output_dir)
    if kind == "relation":
        return render_relation(input_path, output_dir)
    if kind == "certificate":
        return render_certificate(input_path, output_dir)
    raise ValueError(f"unknown report kind {kind!r}")
