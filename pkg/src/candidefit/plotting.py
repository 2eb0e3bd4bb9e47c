"""Report figures (PNG via the Agg backend) and their plot-data CSV tables."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
PNG_METADATA = {"Software": None}  # keep files byte-identical across matplotlib builds
SUMMARY_KEYS = ("accuracy", "kappa", "weighted_f1", "macro_f1")
PER_CLASS_KEYS = ("precision", "recall", "f1")


def per_class_rows(report):
    return [[lbl, *(report["per_class"][lbl][k] for k in PER_CLASS_KEYS),
             report["per_class"][lbl]["support"]] for lbl in report["labels"]]


def write_per_class_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", *PER_CLASS_KEYS, "support"])
        for row in per_class_rows(report):
            w.writerow([row[0], *(repr(float(v)) for v in row[1:4]), row[4]])


def write_summary_csv(path, reports):
    """One row per named report with the headline metrics."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", *SUMMARY_KEYS, "n"])
        for name, rep in reports.items():
            w.writerow([name, *(repr(float(rep[k])) for k in SUMMARY_KEYS), rep["n"]])


def _save(fig, path):
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    plt.close(fig)


def plot_per_class(report, path, title=None):
    with plt.rc_context(STYLE):
        labels = report["labels"]
        x = np.arange(len(labels))
        width = 0.8 / len(PER_CLASS_KEYS)
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        for i, key in enumerate(PER_CLASS_KEYS):
            ax.bar(x + (i - 1) * width, [report["per_class"][lbl][key] for lbl in labels],
                   width, label=key)
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_ylim(0, 1.05)
        ax.legend(frameon=False, ncol=3, loc="lower center", bbox_to_anchor=(0.5, 1.0))
        if title:
            ax.set_title(title, pad=22)
        fig.tight_layout()
        _save(fig, path)


def plot_confusion(report, path, title=None):
    with plt.rc_context(STYLE):
        C = np.asarray(report["confusion"])
        labels = report["labels"]
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        ax.imshow(C, cmap="Blues")
        for i in range(C.shape[0]):
            for j in range(C.shape[1]):
                ax.text(j, i, str(C[i, j]), ha="center", va="center",
                        color="white" if C[i, j] > C.max() / 2 else "black")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30)
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_summary(reports, path):
    """Grouped bars of the headline metrics, one group per named report."""
    with plt.rc_context(STYLE):
        names = list(reports)
        x = np.arange(len(SUMMARY_KEYS))
        width = 0.8 / max(len(names), 1)
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        for i, name in enumerate(names):
            ax.bar(x + (i - (len(names) - 1) / 2) * width,
                   [reports[name][k] for k in SUMMARY_KEYS], width, label=name)
        ax.axhline(0, color="black", linewidth=0.6)
        ax.set_xticks(x)
        ax.set_xticklabels(SUMMARY_KEYS)
        ax.set_ylim(min(0.0, min(r["kappa"] for r in reports.values()) - 0.05), 1.05)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)
