from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .models import DecayFit


logger = logging.getLogger(__name__)

# Fixed ids and no timestamp keep reruns identical.
matplotlib.rcParams["svg.hashsalt"] = "nonlocal-lightcone-lab"
_SVG_METADATA = {"Date": None, "Creator": "nonlocal-lightcone-lab"}


def _save(fig, path: Union[str, Path], description: str) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={**_SVG_METADATA, "Description": description})
    plt.close(fig)
    return out


def tail_mass_plot(
    times: Sequence[float],
    values: Sequence[float],
    n: int,
    path: Union[str, Path],
    fit: Optional[DecayFit] = None,
) -> Path:
    """Tail mass against t on log-log axes with a t^-n guide through the first plotted point."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (t > 0) & (v > 0)
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    if keep.any():
        ax.loglog(t[keep], v[keep], marker="o", ms=3, lw=1.5, label="tail mass")
        t0, v0 = t[keep][0], v[keep][0]
        guide = v0 * (t[keep] / t0) ** (-n)
        ax.loglog(t[keep], guide, color="k", lw=1.0, ls="--", alpha=0.6, label=f"t^-{n}")
        if fit is not None and fit.status == "fit":
            ax.axvspan(fit.fit_window[0], fit.fit_window[1], color="C1", alpha=0.1, label=f"fit slope {fit.fitted_exponent:.2f}")
        ax.legend(loc="best", fontsize=8)
    else:
        ax.text(0.5, 0.5, "tail mass is zero", transform=ax.transAxes, ha="center")
    ax.set(xlabel="t", ylabel="mass outside X_{c|t|}", title="Light-cone tail mass")
    ax.grid(alpha=0.25, linestyle=":")
    summary = f"n={n}; points={int(keep.sum())}"
    if fit is not None:
        summary += f"; status={fit.status}; exponent={fit.fitted_exponent}"
    return _save(fig, path, summary)


def envelope_plot(
    times: Sequence[float],
    observed: Sequence[float],
    bound: Sequence[float],
    path: Union[str, Path],
) -> Path:
    """<A_s(t, chi)>_t against its monotone envelope."""
    t = np.asarray(times, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    ax.plot(t, np.asarray(observed, dtype=float), lw=2.0, label="<A_s(t, chi)>")
    ax.plot(t, np.asarray(bound, dtype=float), color="k", lw=1.0, ls="--", label="envelope")
    ax.set(xlabel="t", ylabel="expectation", title="Monotone envelope")
    ax.grid(alpha=0.25, linestyle=":")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path, f"samples={t.size}; max_gap={float(np.max(np.asarray(bound) - np.asarray(observed))):.6g}")
