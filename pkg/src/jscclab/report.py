"""Report assembly: merge emitted CSVs into summary tables and figures.

Reads the eval/sweep/titration CSVs found in a run directory, writes a merged
summary (CSV plus an aligned text table and a whitespace-delimited .dat with
nan placeholders for gnuplot) and renders the standard figures next to them:
PSNR and accuracy curves against test SNR for every sweep, and the titration
collapse curve on log axes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

EVAL_COLUMNS = ["condition", "snr_db", "psnr_c", "psnr_m", "psnr_b", "ca", "aevc", "asr", "ac"]


def _read_csv_rows(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _read_titration(path: Path):
    rows, verdict = [], None
    with open(path) as f:
        header = f.readline().strip().split(",")
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                verdict = line
                continue
            rows.append(dict(zip(header, parts)))
    return rows, verdict


def _fmt_table(rows: list[dict], columns: list[str]) -> str:
    widths = {c: max(len(c), *(len(r.get(c, "") or "") for r in rows)) if rows else len(c)
              for c in columns}
    out = ["  ".join(c.ljust(widths[c]) for c in columns)]
    for r in rows:
        out.append("  ".join((r.get(c, "") or "").ljust(widths[c]) for c in columns))
    return "\n".join(out) + "\n"


def _plot_sweep(rows: list[dict], out_png: Path, title: str):
    snr = [float(r["snr_db"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key, style in (("psnr_m", "o-"), ("psnr_b", "s--")):
        vals = [float(r[key]) if r[key] else float("nan") for r in rows]
        ax1.plot(snr, vals, style, label=key)
    ax1.set_xlabel("test SNR (dB)")
    ax1.set_ylabel("PSNR (dB)")
    ax1.legend()
    ax1.grid(alpha=0.3)
    for key, style in (("aevc", "o-"), ("asr", "s--")):
        vals = [float(r[key]) if r[key] else float("nan") for r in rows]
        ax2.plot(snr, vals, style, label=key)
    ax2.set_xlabel("test SNR (dB)")
    ax2.set_ylabel("fraction")
    ax2.set_ylim(-0.02, 1.02)
    ax2.legend()
    ax2.grid(alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def _plot_titration(rows: list[dict], verdict: str | None, out_png: Path):
    sig = [float(r["sigma"]) for r in rows]
    pair = [float(r["pairwise_mse"]) for r in rows]
    self_d = [float(r["self_mse"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = [(s, p) for s, p in zip(sig, pair) if s > 0]
    ax.loglog([s for s, _ in pos], [p for _, p in pos], "o-", label="pairwise mse")
    pos_s = [(s, p) for s, p in zip(sig, self_d) if s > 0 and p > 0]
    if pos_s:
        ax.loglog([s for s, _ in pos_s], [p for _, p in pos_s], "s--", label="self mse")
    if pair and pair[0] > 0:
        ax.axhline(pair[0], color="gray", lw=0.8, ls=":", label="baseline D(0)")
    ax.set_xlabel("decoder input noise sigma")
    ax.set_ylabel("reconstruction spread (MSE)")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    ax.set_title(verdict or "titration")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def _write_dat(rows: list[dict], columns: list[str], path: Path):
    with open(path, "w") as f:
        f.write("# " + " ".join(columns) + "\n")
        for r in rows:
            f.write(" ".join((r.get(c) or "nan") if c != "condition"
                             else (r.get(c) or "-").replace(" ", "_") for c in columns) + "\n")


def build_report(run_dir, out_dir=None) -> list[str]:
    """Collect CSVs from run_dir; returns the list of files written."""
    run = Path(run_dir)
    out = Path(out_dir) if out_dir else run
    out.mkdir(parents=True, exist_ok=True)
    written = []

    eval_rows: list[dict] = []
    for path in sorted(run.glob("eval*.csv")) + sorted(run.glob("sweep*.csv")):
        rows = _read_csv_rows(path)
        for r in rows:
            r["source"] = path.name
        eval_rows.extend(rows)
        if path.name.startswith("sweep") and rows:
            png = out / (path.stem + ".png")
            _plot_sweep(rows, png, path.stem)
            written.append(str(png))

    if eval_rows:
        columns = ["source"] + EVAL_COLUMNS
        summary_csv = out / "summary.csv"
        with open(summary_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
            w.writeheader()
            w.writerows(eval_rows)
        summary_txt = out / "summary.txt"
        summary_txt.write_text(_fmt_table(eval_rows, columns))
        summary_dat = out / "summary.dat"
        _write_dat(eval_rows, columns, summary_dat)
        written += [str(summary_csv), str(summary_txt), str(summary_dat)]

    for path in sorted(run.glob("titration*.csv")):
        rows, verdict = _read_titration(path)
        if rows:
            png = out / (path.stem + ".png")
            _plot_titration(rows, verdict, png)
            written.append(str(png))

    return written
