"""Grid sweeps and the CSV / plot-data writers behind the command line."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import __version__
from .config import ScenarioConfig
from .observables import heralded_observables, set_cache_size
from .optimizer import critical_blocksize, max_tolerable_loss, maximize_rate, q_max_search

COLUMNS = ("architecture", "security", "eta_cd", "n_sh", "loss_db", "p_sh", "omega_sh", "q_sh",
           "l", "k_cond", "k", "n_expected", "feasible", "chosen", "error")


def fmt(x) -> str:
    """Stable text form of a cell."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, float)):
        return repr(float(x))
    if isinstance(x, dict):
        return json.dumps({k: float(v) if isinstance(v, float) else v for k, v in x.items()},
                          sort_keys=True)
    return str(x)


def grid_points(cfg: ScenarioConfig):
    """Grid in output order: security set, efficiency, block size, loss."""
    for sec in cfg.security:
        for eta in cfg.eta_grid:
            for n in cfg.n_sh_grid:
                for loss in cfg.loss_grid:
                    yield sec, eta, n, loss


def setup_at(cfg: ScenarioConfig, eta: float, loss: float):
    return replace(cfg.setup, eta_c=eta, eta_d=eta, loss_db=loss)


def evaluate_point(task) -> dict:
    """One CSV row; failures are reported in the error column."""
    cfg, sec, eta, n, loss = task
    row = {"architecture": cfg.setup.architecture, "security": sec.name, "eta_cd": eta,
           "n_sh": n, "loss_db": loss}
    try:
        r = maximize_rate(setup_at(cfg, eta, loss), replace(cfg.spec, seed=cfg.seed), sec, n)
        o = r.observables
        row.update(p_sh=o.p_sh, omega_sh=o.omega_sh, q_sh=o.q_sh, l=r.l, k_cond=r.k_cond, k=r.k,
                   n_expected=r.n_expected, feasible=r.feasible,
                   chosen={k: v for k, v in r.chosen.items() if k != "grid_best_k"})
    except (ValueError, ArithmeticError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def _pmap(fn, tasks, workers: int, cache_size: int):
    set_cache_size(cache_size)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=set_cache_size,
                                 initargs=(cache_size,)) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def run_sweep(cfg: ScenarioConfig) -> list[dict]:
    """Evaluate every grid point (in parallel when configured), rows in grid order."""
    tasks = [(cfg, *p) for p in grid_points(cfg)]
    return _pmap(evaluate_point, tasks, cfg.workers, cfg.cache_size)


def observables_rows(cfg: ScenarioConfig) -> list[dict]:
    rows = []
    for _, eta, n, loss in grid_points(replace(cfg, security=cfg.security[:1])):
        o = heralded_observables(setup_at(cfg, eta, loss))
        rows.append({"architecture": cfg.setup.architecture, "eta_cd": eta, "n_sh": n,
                     "loss_db": loss, "p_sh": o.p_sh, "omega_sh": o.omega_sh, "q_sh": o.q_sh,
                     "s_sh": o.s_sh, "n_expected": n / o.p_sh if o.p_sh > 0 else math.inf})
    return rows


def header_line(cfg: ScenarioConfig, kind: str) -> str:
    return f"# diqkd_amp {__version__} {kind} config={cfg.digest} seed={cfg.seed}\n"


def to_csv(rows, columns, header: str) -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def curves_from(rows, x: str = "loss_db", y: str = "k") -> dict:
    """Group rows into named curves of (x, y) points."""
    curves = {}
    for r in rows:
        if r.get("error"):
            continue
        name = f"{r['security']}_eta{r['eta_cd']:g}_n{r['n_sh']:.0e}"
        curves.setdefault(name, []).append((r[x], r[y]))
    return curves


def plot_data_text(curves: dict, header: str) -> str:
    buf = io.StringIO()
    buf.write(header)
    buf.write("curve,x,y\n")
    for name, pts in curves.items():
        for x, y in pts:
            buf.write(f"{name},{fmt(x)},{fmt(y)}\n")
    return buf.getvalue()


def write_plots(curves: dict, out_dir: str, formats, xlabel="channel loss (dB)",
                ylabel="K", logy=True) -> list[str]:
    """One static figure per curve; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for name, pts in curves.items():
        fig, ax = plt.subplots(figsize=(5, 3.5))
        xs = [p[0] for p in pts]
        ys = [p[1] if p[1] > 0 else math.nan for p in pts]
        ax.plot(xs, ys, marker="o")
        if logy and any(y == y for y in ys):
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(name)
        fig.tight_layout()
        for ext in formats:
            path = os.path.join(out_dir, f"{name}.{ext}")
            meta = {"Date": None} if ext == "svg" else {}
            fig.savefig(path, metadata=meta)
            paths.append(path)
        plt.close(fig)
    return paths


def write_outputs(cfg: ScenarioConfig, rows, out_dir: str, kind: str = "sweep",
                  columns=COLUMNS, x="loss_db", y="k") -> list[str]:
    """Write the CSV, the plot-data file and optional figures."""
    os.makedirs(out_dir, exist_ok=True)
    head = header_line(cfg, kind)
    written = []
    path = os.path.join(out_dir, f"{cfg.name}_{kind}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(rows, columns, head))
    written.append(path)
    if x is not None:
        curves = curves_from(rows, x, y)
        path = os.path.join(out_dir, f"{cfg.name}_{kind}_plot.csv")
        with open(path, "w", newline="") as fh:
            fh.write(plot_data_text(curves, head))
        written.append(path)
        if cfg.plot:
            written += write_plots(curves, out_dir, cfg.formats)
    return written


def critical_rows(cfg: ScenarioConfig) -> list[dict]:
    rows = []
    for sec in cfg.security:
        for eta in cfg.etas or cfg.eta_grid:
            p = critical_blocksize(setup_at(cfg, eta, cfg.loss_grid[0]), sec, cfg.spec)
            rows.append({"security": sec.name, "eta_cd": eta, "n_star": p.n_star,
                         "unbounded": p.unbounded, "k": p.k})
    return rows


def max_loss_rows(cfg: ScenarioConfig) -> list[dict]:
    rows = []
    for sec in cfg.security:
        for eta in cfg.eta_grid:
            for n in cfg.n_sh_grid:
                lm = max_tolerable_loss(setup_at(cfg, eta, 0.0), cfg.mode, sec, cfg.spec, n,
                                        cfg.threshold, cfg.n_cap, cfg.tol_db)
                rows.append({"security": sec.name, "eta_cd": eta, "n_sh": n,
                             "max_loss_db": lm})
    return rows


def q_max_rows(cfg: ScenarioConfig) -> list[dict]:
    rows = []
    for sec in cfg.security:
        for eta in cfg.eta_grid:
            for n in cfg.n_sh_grid:
                for loss in cfg.loss_grid:
                    q = q_max_search(loss, setup_at(cfg, eta, loss), sec, cfg.spec, n, cfg.n_cap)
                    rows.append({"security": sec.name, "eta_cd": eta, "n_sh": n,
                                 "loss_db": loss, "q_max": q})
    return rows


def session_time(n_expected: float, clock_rate: float) -> float:
    """Session duration in seconds: expected signals divided by the clock rate."""
    if n_expected <= 0 or clock_rate <= 0:
        raise ValueError("signals and clock rate must be positive")
    if math.isinf(clock_rate):
        return 0.0
    return n_expected / clock_rate
