"""Plot-ready data series from reports and loss curves, plus optional rendering.

The series are plain JSON; rendering needs matplotlib (the ``plot`` extra).
"""
from __future__ import annotations

import os


def cell_name(cell):
    return f"{cell['n_way']}way{cell['k_shot']}shot"


def report_series(report):
    """ROC, PCA and confusion series for every cell of an eval report."""
    out = {}
    for cell in report["cells"]:
        name = cell_name(cell)
        out[f"roc_{name}"] = {
            "kind": "roc", "title": f"ROC {cell['n_way']}-way {cell['k_shot']}-shot",
            "auc": cell["auc"],
            "x": [p[0] for p in cell["roc_points"]], "y": [p[1] for p in cell["roc_points"]],
        }
        pos = [c for c in cell["pca_coords"] if c[2]]
        neg = [c for c in cell["pca_coords"] if not c[2]]
        out[f"pca_{name}"] = {
            "kind": "scatter", "title": f"PCA of distance features, {name}",
            "positive": {"x": [c[0] for c in pos], "y": [c[1] for c in pos]},
            "negative": {"x": [c[0] for c in neg], "y": [c[1] for c in neg]},
        }
        cm = cell["confusion"]
        out[f"confusion_{name}"] = {
            "kind": "confusion", "title": f"Pair confusion {name}",
            "matrix": [[cm["tp"], cm["fn"]], [cm["fp"], cm["tn"]]],
            "rows": ["same", "different"], "cols": ["predicted same", "predicted different"],
        }
    return out


def loss_series(curve):
    return {"loss": {
        "kind": "loss", "title": "Loss during training",
        "train": {"x": [r["epoch"] for r in curve["train"]], "y": [r["loss"] for r in curve["train"]]},
        "val": {"x": [r["epoch"] for r in curve["val"]], "y": [r["loss"] for r in curve["val"]]},
    }}


def render(series, out_dir):
    """Draw every series to ``out_dir/<name>.png``; returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for name, s in series.items():
        fig, ax = plt.subplots(figsize=(4.5, 4))
        kind = s["kind"]
        if kind == "roc":
            ax.plot(s["x"], s["y"], label=f"AUC = {s['auc']:.3f}")
            ax.plot([0, 1], [0, 1], ls=":", c="grey")
            ax.set_xlabel("false positive rate")
            ax.set_ylabel("true positive rate")
            ax.legend(loc="lower right")
        elif kind == "scatter":
            ax.scatter(s["negative"]["x"], s["negative"]["y"], s=6, label="negative pairs")
            ax.scatter(s["positive"]["x"], s["positive"]["y"], s=6, label="positive pairs")
            ax.legend()
        elif kind == "confusion":
            ax.imshow(s["matrix"], cmap="Blues")
            for i, row in enumerate(s["matrix"]):
                for j, v in enumerate(row):
                    ax.text(j, i, str(v), ha="center", va="center")
            ax.set_xticks([0, 1], s["cols"])
            ax.set_yticks([0, 1], s["rows"])
        elif kind == "loss":
            ax.plot(s["train"]["x"], s["train"]["y"], label="train")
            ax.plot(s["val"]["x"], s["val"]["y"], label="validation")
            ax.set_xlabel("epoch")
            ax.set_ylabel("loss")
            ax.legend()
        ax.set_title(s["title"])
        fig.tight_layout()
        path = os.path.join(out_dir, f"{name}.png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths
