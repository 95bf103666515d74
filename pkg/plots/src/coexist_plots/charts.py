"""Chart rendering: static PNGs only, values returned for verification."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .results import ResultTable, upt_improvement_by_load, voip_outage_by_load


def plot_upt_improvement(table: ResultTable, out_png: str,
                         operator: int = 1) -> dict[str, dict]:
    """Grouped bars of relative UPT change for the non-replaced operator.

    One group per load class with mean-UPT and median-UPT deltas side by
    side, error bars showing the standard deviation across replications.
    Returns the plotted numbers keyed by load class.
    """
    mean_data = upt_improvement_by_load(table, operator, "upt_mean_mbps")
    p50_data = upt_improvement_by_load(table, operator, "upt_p50_mbps")
    loads = sorted(set(mean_data) | set(p50_data))
    width = 0.35
    xs = range(len(loads))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar([x - width / 2 for x in xs],
           [100 * mean_data.get(l, {"mean": 0.0})["mean"] for l in loads],
           width,
           yerr=[100 * mean_data.get(l, {"std": 0.0})["std"] for l in loads],
           capsize=4, label="mean UPT")
    ax.bar([x + width / 2 for x in xs],
           [100 * p50_data.get(l, {"mean": 0.0})["mean"] for l in loads],
           width,
           yerr=[100 * p50_data.get(l, {"std": 0.0})["std"] for l in loads],
           capsize=4, label="median UPT")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(xs), loads)
    ax.set_xlabel("load class (step-1 buffer occupancy)")
    ax.set_ylabel("UPT change, step 2 vs step 1 [%]")
    ax.set_title(f"Non-replaced operator {operator}: UPT after replacing the "
                 f"other network")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return {"mean": mean_data, "p50": p50_data}


def plot_voip_outage(table: ResultTable, out_png: str,
                     operator: int = 1) -> dict[str, dict]:
    """Step-1 vs step-2 VoIP outage bars per load class, with error bars."""
    data = voip_outage_by_load(table, operator)
    loads = sorted(data)
    width = 0.35
    xs = range(len(loads))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar([x - width / 2 for x in xs],
           [data[l]["step1_mean"] for l in loads], width,
           yerr=[data[l]["step1_std"] for l in loads], capsize=4,
           label="step 1 (Wi-Fi + Wi-Fi)")
    ax.bar([x + width / 2 for x in xs],
           [data[l]["step2_mean"] for l in loads], width,
           yerr=[data[l]["step2_std"] for l in loads], capsize=4,
           label="step 2 (Wi-Fi + LAA)")
    ax.set_xticks(list(xs), loads)
    ax.set_xlabel("load class (step-1 buffer occupancy)")
    ax.set_ylabel("VoIP outage fraction")
    ax.set_title(f"Operator {operator} VoIP outage across the two steps")
    ax.set_ylim(bottom=0.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return data
