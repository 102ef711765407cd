"""Figure rendering for the ``report`` command.

matplotlib is imported lazily (Agg backend) so that the rest of the package
runs without it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PHASE_CODES = {"I": 0, "II": 1, "III": 2, "IIIa": 2, "IIIb": 2, "undetermined": -1}


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figure output needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _axis_values(rows: list, key: str) -> np.ndarray:
    return np.unique([float(r[key]) for r in rows])


def plot_phase_map(rows: list, path, title: str = "") -> Path:
    """Phase map from grid rows (lax or trajectory engine) over the two swept axes."""
    plt = _pyplot()
    ii = np.array([int(r["i"]) for r in rows])
    jj = np.array([int(r["j"]) for r in rows])
    grid = np.full((ii.max() + 1, jj.max() + 1), np.nan)
    for r, i, j in zip(rows, ii, jj):
        grid[i, j] = PHASE_CODES.get(r["phase"], -1)
    angle = np.array([float(r["angle"]) for r in rows])
    w = np.array([float(r["w_over_chin"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    cmap = plt.get_cmap("viridis", 4)
    im = ax.imshow(grid.T, origin="lower", aspect="auto", cmap=cmap, vmin=-1.5, vmax=2.5,
                   extent=(angle.min() / np.pi, angle.max() / np.pi, w.min(), w.max()))
    bar = fig.colorbar(im, ticks=[-1, 0, 1, 2])
    bar.ax.set_yticklabels(["undet.", "I", "II", "III"])
    ax.set_xlabel(r"$\Delta\phi_0/\pi$")
    ax.set_ylabel(r"$W/(\chi N)$")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_cavity_grid(rows: list, path) -> Path:
    """Robust peak count and dominant frequencies along a 1-d cavity sweep."""
    plt = _pyplot()
    axis = next(k for k in ("w_over_chin", "angle", "eps0_over_chin") if len(_axis_values(rows, k)) > 1)
    x = np.array([float(r[axis]) for r in rows])
    n = np.array([int(r["n_robust_peaks"]) if r["n_robust_peaks"] else 0 for r in rows])
    f1 = np.array([float(r["f1"]) if r["f1"] else np.nan for r in rows])
    fig, (a0, a1) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
    a0.step(x, n, where="mid")
    a0.set_ylabel("robust peaks")
    a1.plot(x, f1, "o-")
    a1.set_ylabel(r"dominant $\omega/(\chi N)$")
    a1.set_xlabel(axis)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_trajectory(traj, path) -> Path:
    plt = _pyplot()
    fig, (a0, a1) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    a0.plot(traj.times, traj.abs_delta, lw=0.8)
    a0.set_ylabel(r"$|\Delta(t)|$")
    a1.plot(traj.times, traj.jz, lw=0.8)
    a1.set_ylabel(r"$J_z$")
    a1.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_spectrum(result, path, label: str = "") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(result.frequencies, result.magnitudes, lw=0.8)
    for p in result.peaks:
        ax.axvline(p.frequency, color="r", lw=0.5, alpha=0.6)
    ax.set_xlabel(r"$\omega$")
    ax.set_ylabel("magnitude")
    if label:
        ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
