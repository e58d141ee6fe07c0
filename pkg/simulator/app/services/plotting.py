"""
Static SVG convergence plots: agent actions over time against the reference equilibrium,
with the error to the equilibrium on a log scale below.
"""
import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

from app.core.errors import UsageError  # noqa: E402
from app.schemas.run import RunRecord  # noqa: E402

logger = logging.getLogger(__name__)

_SVG_PARAMS = {"svg.fonttype": "none", "svg.hashsalt": "cluster-nash"}


def emit_convergence_plot(
    records: Sequence[RunRecord],
    path: Path,
    sizes: Sequence[int],
    reference: np.ndarray | None = None,
) -> None:
    if not records:
        raise UsageError("need at least one run record to plot")
    if len({r.scenario_hash for r in records}) > 1:
        raise UsageError("all plotted runs must come from the same scenario")
    if any(len(r) == 0 for r in records):
        raise UsageError("cannot plot an empty run record")

    colors = plt.get_cmap("tab10")
    owner = [i for i, n in enumerate(sizes) for _ in range(n)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with matplotlib.rc_context(_SVG_PARAMS):
        fig, (ax_x, ax_err) = plt.subplots(
            2, 1, figsize=(9, 8), sharex=True, gridspec_kw={"height_ratios": [3, 2]}
        )
        try:
            seed_handles = []
            for k, record in enumerate(records):
                iterations = np.asarray(record.iterations)
                traj = record.trajectory()
                alpha = 1.0 if len(records) == 1 else max(0.35, 1.0 - 0.5 * k / (len(records) - 1))
                for col in range(traj.shape[1]):
                    ax_x.plot(iterations, traj[:, col], color=colors(owner[col] % 10), linewidth=1.0, alpha=alpha)
                err = np.asarray(record.err_to_ne, dtype=float)
                mask = np.isfinite(err) & (err > 0)
                (line,) = ax_err.plot(
                    iterations[mask], err[mask], linewidth=1.2, alpha=alpha, label=f"seed {record.seed}"
                )
                seed_handles.append(line)

            if reference is not None:
                for col, value in enumerate(np.asarray(reference, dtype=float)):
                    ax_x.axhline(value, color=colors(owner[col] % 10), linestyle="--", linewidth=0.9)

            cluster_handles = [
                Line2D([], [], color=colors(i % 10), label=f"cluster {i + 1}") for i in range(len(sizes))
            ]
            if reference is not None:
                cluster_handles.append(Line2D([], [], color="gray", linestyle="--", label="Nash equilibrium"))
            ax_x.legend(handles=cluster_handles, loc="best", fontsize=8)
            ax_x.set_ylabel("agent action")
            ax_x.set_title("Convergence of the agents' actions")
            ax_x.grid(True, linestyle="--", alpha=0.5)

            ax_err.set_yscale("log")
            ax_err.set_xlabel("iteration")
            ax_err.set_ylabel("||x(t) - x*||")
            ax_err.grid(True, which="both", linestyle="--", alpha=0.5)
            ax_err.legend(handles=seed_handles, loc="best", fontsize=8)

            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    logger.debug("[plot] wrote %s (%d runs)", path, len(records))
