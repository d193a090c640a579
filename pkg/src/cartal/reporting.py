"""Plot-ready report tables rendered from a finished experiment directory.

Everything here reads the CSV artifacts back in, so reports can be regenerated
without rerunning anything. Output is either CSV or pipe-delimited markdown.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import numpy as np

__all__ = ["render_report"]


def _read_csv(path) -> list[dict]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing report input: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _write_table(path, header, rows, fmt):
    if fmt == "md":
        def cell(c):
            # pipes inside cells (the "ablated | original" scheme) must not
            # break the table
            return str(c).replace("|", "\\|")

        with open(path, "w", encoding="utf-8") as fh:
            fh.write("| " + " | ".join(cell(h) for h in header) + " |\n")
            fh.write("|" + "|".join([" --- "] * len(header)) + "|\n")
            for row in rows:
                fh.write("| " + " | ".join(cell(c) for c in row) + " |\n")
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    return path


def _mean(values):
    return float(np.mean([float(v) for v in values]))


def _learning_curve(rounds_rows):
    by_cell = defaultdict(list)
    strategies, rounds = [], []
    for row in rounds_rows:
        s, r = row["strategy"], int(row["round"])
        if s not in strategies:
            strategies.append(s)
        if r not in rounds:
            rounds.append(r)
        by_cell[(s, r)].append(row["val_acc"])
    rounds.sort()
    header = ["round"] + strategies
    table = [
        [r] + [f"{_mean(by_cell[(s, r)]):.4f}" if by_cell[(s, r)] else "" for s in strategies]
        for r in rounds
    ]
    return header, table


def _profile_table(profile_rows):
    class_cols = [c for c in profile_rows[0] if c.startswith("class_")] if profile_rows else []
    by_strategy = defaultdict(list)
    order = []
    for row in profile_rows:
        if row["strategy"] not in order:
            order.append(row["strategy"])
        by_strategy[row["strategy"]].append(row)
    header = ["strategy", "input_diversity", "output_uncertainty"] + class_cols
    table = []
    for s in order:
        rows = by_strategy[s]
        table.append(
            [s, f"{_mean([r['input_diversity'] for r in rows]):.4f}",
             f"{_mean([r['output_uncertainty'] for r in rows]):.4f}"]
            + [f"{_mean([r[c] for r in rows]):.4f}" for c in class_cols]
        )
    return header, table


def _paired_table(ablated_rows, original_rows):
    orig = {(r["strategy"], r["test_set"]): r for r in original_rows}
    strategies, test_sets = [], []
    for r in ablated_rows:
        if r["strategy"] not in strategies:
            strategies.append(r["strategy"])
        if r["test_set"] not in test_sets:
            test_sets.append(r["test_set"])
    header = ["strategy"] + test_sets
    table = []
    for s in strategies:
        cells = [s]
        abl = {r["test_set"]: r for r in ablated_rows if r["strategy"] == s}
        for t in test_sets:
            a = abl.get(t)
            o = orig.get((s, t))
            a_txt = f"{float(a['mean']):.4f} ± {float(a['std']):.4f}" if a else "-"
            o_txt = f"{float(o['mean']):.4f} ± {float(o['std']):.4f}" if o else "-"
            cells.append(f"{a_txt} | {o_txt}")
        table.append(cells)
    return header, table


def _stratified_table(strat_rows):
    strategies = []
    for r in strat_rows:
        if r["strategy"] not in strategies:
            strategies.append(r["strategy"])
    cells = defaultdict(list)
    keys = []
    for r in strat_rows:
        key = (r["test_set"], r["difficulty"])
        if key not in keys:
            keys.append(key)
        cells[(r["test_set"], r["difficulty"], r["strategy"])].append(r["accuracy"])
    header = ["test_set", "difficulty"] + strategies
    table = []
    for test_set, difficulty in keys:
        row = [test_set, difficulty]
        for s in strategies:
            vals = cells[(test_set, difficulty, s)]
            row.append(f"{_mean(vals):.4f}" if vals else "")
        table.append(row)
    return header, table


def _splits_table(split_rows):
    combos, test_sets = [], []
    by_cell = {}
    for r in split_rows:
        if r["strategy"] not in combos:
            combos.append(r["strategy"])
        if r["test_set"] not in test_sets:
            test_sets.append(r["test_set"])
        by_cell[(r["strategy"], r["test_set"])] = r
    header = ["combo"] + test_sets
    table = []
    for c in combos:
        row = [c]
        for t in test_sets:
            r = by_cell.get((c, t))
            row.append(f"{float(r['mean']):.4f} ± {float(r['std']):.4f}" if r else "")
        table.append(row)
    return header, table


def render_report(exp_dir, fmt: str = "csv") -> list[str]:
    """Render all applicable tables; returns the written file paths.

    Requires rounds.csv and summary.csv. The paired ablated|original table
    appears only when both suite variants are present, the stratified and
    splits tables only when their CSVs exist.
    """
    if fmt not in ("csv", "md"):
        raise ValueError(f"format must be 'csv' or 'md': {fmt!r}")
    ext = fmt
    rounds_rows = _read_csv(os.path.join(exp_dir, "rounds.csv"))
    summary_rows = _read_csv(os.path.join(exp_dir, "summary.csv"))
    written = []

    header, table = _learning_curve(rounds_rows)
    written.append(_write_table(os.path.join(exp_dir, f"report_learning_curve.{ext}"),
                                header, table, fmt))

    profile_path = os.path.join(exp_dir, "profile.csv")
    if os.path.exists(profile_path):
        header, table = _profile_table(_read_csv(profile_path))
        written.append(_write_table(os.path.join(exp_dir, f"report_profile.{ext}"),
                                    header, table, fmt))

    ablated_path = os.path.join(exp_dir, "summary_ablated.csv")
    if os.path.exists(ablated_path):
        header, table = _paired_table(_read_csv(ablated_path), summary_rows)
        written.append(_write_table(os.path.join(exp_dir, f"report_paired.{ext}"),
                                    header, table, fmt))

    strat_path = os.path.join(exp_dir, "stratified.csv")
    if os.path.exists(strat_path):
        header, table = _stratified_table(_read_csv(strat_path))
        written.append(_write_table(os.path.join(exp_dir, f"report_stratified.{ext}"),
                                    header, table, fmt))

    splits_path = os.path.join(exp_dir, "splits.csv")
    if os.path.exists(splits_path):
        header, table = _splits_table(_read_csv(splits_path))
        written.append(_write_table(os.path.join(exp_dir, f"report_splits.{ext}"),
                                    header, table, fmt))
    return written
