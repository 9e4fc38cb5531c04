"""Static figures for the CLI reports (matplotlib, non-interactive backend)."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata and element ids keep repeated runs byte-identical
matplotlib.rcParams["svg.hashsalt"] = "cornerheat"
_SVG_META = {"Date": None}
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".") or "svg"
    meta = _SVG_META if fmt == "svg" else _PNG_META if fmt == "png" else None
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format=fmt, metadata=meta, bbox_inches="tight")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)
    return path


def plot_c2(curve, path) -> Path:
    """C2(tau) with error bars and the two limits, log tau axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(curve.taus, curve.values, yerr=curve.errors, marker="o", ms=4, lw=1.2, label="C2(tau)")
    ax.axhline(curve.limit0, color="C2", ls="--", lw=1, label=f"tau -> 0: {curve.limit0:.4g}")
    ax.axhline(curve.limit_inf, color="C3", ls=":", lw=1, label=f"tau -> inf: {curve.limit_inf:.4g}")
    ax.set_xscale("log")
    ax.set_xlabel("tau = t / eps^2")
    ax.set_ylabel("C2")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_trace_fit(curve, fit, path) -> Path:
    """r(t) = trace - a0/t - a1/sqrt(t) against sqrt(t), with the fitted a2."""
    s = np.sqrt(curve.t)
    r = curve.values - fit.a0 / curve.t - fit.a1 / s
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(s, r, "o-", ms=3, lw=1, label="trace - a0/t - a1/sqrt(t)")
    ax.plot([0.0], [fit.a2], "s", color="C3", label=f"a2 = {fit.a2:.6g}")
    ax.set_xlim(left=0.0)
    ax.set_xlabel("sqrt(t)")
    ax.set_ylabel("remainder")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_anomaly(results, path) -> Path:
    """Remainder curves for each eps against t / eps^2, with fitted a2 values."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, res in enumerate(results):
        c, f = res.curve, res.fit
        r = c.values - f.a0 / c.t - f.a1 / np.sqrt(c.t)
        lab = "polygon" if res.eps == 0 else f"eps = {res.eps:g}"
        ax.plot(np.sqrt(c.t) / np.sqrt(c.t).max(), r, "o-", ms=3, lw=1, color=f"C{k}",
                label=f"{lab}: a2 = {f.a2:.4f}")
    ax.axhline(1 / 6, color="gray", ls="--", lw=0.8)
    ax.axhline(0.25, color="gray", ls=":", lw=0.8)
    ax.set_xlim(left=0.0)
    ax.set_xlabel("sqrt(t) / sqrt(t_max)")
    ax.set_ylabel("trace - a0/t - a1/sqrt(t)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_residual(result, path) -> Path:
    """|residual| of the trace split against t on log axes."""
    rc = result.residual
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(rc.t, np.abs(rc.residual) + 1e-300, "o-", ms=4,
              label=f"eps = {result.eps:g}, slope {rc.fitted_slope:.2f}")
    ax.set_xlabel("t")
    ax.set_ylabel("|Tr - I - II|")
    ax.legend(frameon=False)
    return _save(fig, path)
