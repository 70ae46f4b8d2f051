"""Exports: delimited tables, JSON documents, and rendered figures.

Everything here works off the plain-dict run document so saved runs can
be re-exported without recomputing.  CSV floats use repr() for exact
round-trips; JSON is dumped with sorted keys.  Figures render with the
Agg backend into a figures/ directory next to the tables.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, doc: dict) -> None:
    with path.open("w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_run(doc: dict, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write every artifact for a run document; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    p = out / "run.json"
    write_json(p, doc)
    written.append(p)

    p = out / "metrics.json"
    write_json(
        p,
        {
            "scenario": doc["scenario"],
            "replay": doc["replay"],
            "solver": {
                rule: {
                    k: v
                    for k, v in rep.items()
                    if k != "iterations" and k != "rounded"
                }
                for rule, rep in doc.get("solver", {}).items()
            },
        },
    )
    written.append(p)

    p = out / "trajectory.csv"
    write_csv(
        p,
        ["rule", "t", "block", "objective", "delta", "rounded_violation"],
        (
            (rule, r["t"], r["block"], r["objective"], r["delta"], r["rounded_violation"])
            for rule, rep in sorted(doc.get("solver", {}).items())
            for r in rep["iterations"]
        ),
    )
    written.append(p)

    p = out / "compute_samples.csv"
    rows = []
    for rule, rep in sorted(doc.get("solver", {}).items()):
        cum = 0.0
        for r in rep["iterations"]:
            cum += r["compute_sample_hz"]
            rows.append((rule, r["t"], r["compute_sample_hz"], cum))
    write_csv(p, ["rule", "t", "compute_sample_hz", "cumulative_hz"], rows)
    written.append(p)

    p = out / "delays.csv"
    write_csv(
        p,
        [
            "time_s", "passenger_id", "car_id", "rsu_id", "content_id",
            "fmt", "tier", "delay_s", "dc_first_fetch",
        ],
        (
            (
                o["time_s"], o["passenger_id"], o["car_id"], o["rsu_id"],
                o["content_id"], o["fmt"], o["tier"], o["delay_s"],
                int(o["dc_first_fetch"]),
            )
            for o in doc.get("outcomes", [])
        ),
    )
    written.append(p)

    p = out / "tiers.csv"
    counts = doc["replay"]["tier_counts"]
    fracs = doc["replay"]["tier_fractions"]
    write_csv(
        p,
        ["tier", "count", "fraction"],
        ((t, counts[t], fracs[t]) for t in sorted(counts)),
    )
    written.append(p)

    p = out / "training_curves.csv"
    tr = doc["training"]
    write_csv(
        p,
        ["epoch", "train_loss", "train_acc", "test_loss", "test_acc"],
        zip(tr["epochs"], tr["train_loss"], tr["train_acc"], tr["test_loss"], tr["test_acc"]),
    )
    written.append(p)

    p = out / "plan.csv"
    write_csv(
        p,
        ["car_id", "rsu_id", "leg", "entry_time_s", "dwell_s", "rho", "q", "d_perp_m"],
        (
            (c["car_id"], e["rsu_id"], e["leg"], e["entry_time_s"], e["dwell_s"],
             e["rho"], e["q"], e["d_perp_m"])
            for c in doc.get("cars", [])
            for e in c["plan"]
        ),
    )
    written.append(p)

    if figures:
        written.extend(render_figures(doc, out / "figures"))
    return written


def render_figures(doc: dict, fig_dir: str | Path) -> list[Path]:
    """Convergence, tier mix, compute usage, and training curves as PNGs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    solver = doc.get("solver", {})
    if solver:
        fig, ax = plt.subplots(figsize=(7, 4.2))
        for rule, rep in sorted(solver.items()):
            its = rep["iterations"]
            ax.plot([r["t"] for r in its], [r["objective"] for r in its], label=rule)
        ax.set_xlabel("iteration")
        ax.set_ylabel("total delay (s)")
        ax.set_title("Relaxed objective per block update")
        ax.legend()
        fig.tight_layout()
        p = fig_dir / "convergence.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

        fig, ax = plt.subplots(figsize=(7, 4.2))
        for rule, rep in sorted(solver.items()):
            its = rep["iterations"]
            cum = []
            s = 0.0
            for r in its:
                s += r["compute_sample_hz"]
                cum.append(s)
            ax.plot([r["t"] for r in its], cum, label=rule)
        ax.set_xlabel("iteration")
        ax.set_ylabel("cumulative engaged compute (Hz)")
        ax.set_title("Compute drawn while converging")
        ax.legend()
        fig.tight_layout()
        p = fig_dir / "compute_cdf.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

    if "replay" in doc:
        fracs = doc["replay"]["tier_fractions"]
        tiers = sorted(fracs)
        fig, ax = plt.subplots(figsize=(7, 4.2))
        ax.bar(range(len(tiers)), [fracs[t] for t in tiers])
        ax.set_xticks(range(len(tiers)))
        ax.set_xticklabels(tiers, rotation=20, ha="right")
        ax.set_ylabel("fraction of demands")
        ax.set_title(f"Service mix (edge fraction {doc['replay']['edge_fraction']:.3f})")
        fig.tight_layout()
        p = fig_dir / "tiers.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

    tr = doc.get("training")
    if tr and tr["epochs"]:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
        ax1.plot(tr["epochs"], tr["train_loss"], label="train")
        ax1.plot(tr["epochs"], tr["test_loss"], label="held out")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("cross entropy")
        ax1.legend()
        ax2.plot(tr["epochs"], tr["train_acc"], label="train")
        ax2.plot(tr["epochs"], tr["test_acc"], label="held out")
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("accuracy")
        ax2.legend()
        fig.tight_layout()
        p = fig_dir / "training.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)
    return written
