"""Expression/response tables and pseudo-ground-truth weights.

File formats
------------
Expression CSV::

    cell_line,<gene_id>,...
    #scale=raw|log2          (optional, default log2)
    <cell_line>,<value>,...

Raw-scale values are stored as ``log2(value + 1)``.

Response CSV: header ``cell_line,drug,log_ic50``.

Gene filter: one gene id per line.

Pseudo-ground-truth cache: one CSV per drug, header
``cell_line,lambda_min,center,<gene_id>...``. The row for a per-drug fit
(no held-out cell line) has cell line ``*``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional
from urllib.parse import quote, unquote

import numpy as np

from .elicitation import TargetCase
from .regression import Dataset, WeightVector, fit_lasso, cv_select_lambda, LassoConfig

PER_DRUG = "*"


class ParseError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def _float(text, path, lineno, what):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, lineno, f"non-numeric {what} {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, lineno, f"non-finite {what} {text!r}")
    return v


@dataclass
class ExpressionTable:
    cell_line_ids: list
    gene_ids: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.cell_line_ids), len(self.gene_ids)):
            raise ValueError("values shape does not match id lists")
        for name, ids in (("cell line", self.cell_line_ids), ("gene", self.gene_ids)):
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {name} ids")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("expression values must be finite")
        self._row = {c: i for i, c in enumerate(self.cell_line_ids)}

    def __contains__(self, cell_line):
        return cell_line in self._row

    def row(self, cell_line: str) -> np.ndarray:
        return self.values[self._row[cell_line]]

    def rows(self, cell_lines) -> np.ndarray:
        return self.values[[self._row[c] for c in cell_lines]]

    def select_genes(self, gene_ids: Iterable[str]) -> "ExpressionTable":
        wanted = list(dict.fromkeys(gene_ids))
        col = {g: j for j, g in enumerate(self.gene_ids)}
        missing = [g for g in wanted if g not in col]
        if missing:
            warnings.warn(f"{len(missing)} filter genes absent from expression table: {missing[:5]}")
        keep = [g for g in wanted if g in col]
        if not keep:
            raise ValueError("gene filter leaves no genes")
        return ExpressionTable(
            list(self.cell_line_ids), keep, self.values[:, [col[g] for g in keep]]
        )


@dataclass
class ResponseTable:
    records: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for cell, drug, v in self.records:
            if (cell, drug) in seen:
                raise ValueError(f"duplicate response for ({cell}, {drug})")
            if not math.isfinite(v):
                raise ValueError(f"non-finite response for ({cell}, {drug})")
            seen.add((cell, drug))

    def __len__(self):
        return len(self.records)

    @property
    def drugs(self) -> list:
        return list(dict.fromkeys(d for _, d, _ in self.records))

    def for_drug(self, drug: str) -> dict:
        return {c: v for c, d, v in self.records if d == drug}


def load_expression(path) -> ExpressionTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if not header or header[0].strip() != "cell_line":
            raise ParseError(path, 1, "header must start with 'cell_line'")
        genes = [g.strip() for g in header[1:]]
        if not genes:
            raise ParseError(path, 1, "no gene columns")
        if len(set(genes)) != len(genes):
            raise ParseError(path, 1, "duplicate gene id in header")
        scale = "log2"
        cells, rows = [], []
        seen = set()
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            first = row[0].strip()
            if first.startswith("#"):
                if lineno == 2 and first.startswith("#scale="):
                    scale = first.split("=", 1)[1].strip()
                    if scale not in ("raw", "log2"):
                        raise ParseError(path, lineno, f"unknown scale {scale!r}")
                    continue
                raise ParseError(path, lineno, "unexpected comment line")
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            if not first:
                raise ParseError(path, lineno, "empty cell line id")
            if first in seen:
                raise ParseError(path, lineno, f"duplicate cell line {first!r}")
            seen.add(first)
            vals = [_float(v, path, lineno, "value") for v in row[1:]]
            if scale == "raw":
                if min(vals) < 0:
                    raise ParseError(path, lineno, "negative raw count")
                vals = [math.log2(v + 1.0) for v in vals]
            cells.append(first)
            rows.append(vals)
    values = np.array(rows, dtype=float).reshape(len(rows), len(genes))
    return ExpressionTable(cells, genes, values)


def write_expression(table: ExpressionTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_line", *table.gene_ids])
        w.writerow(["#scale=log2"])
        for cell, vals in zip(table.cell_line_ids, table.values):
            w.writerow([cell, *(repr(float(v)) for v in vals)])


def load_responses(path) -> ResponseTable:
    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if header != ["cell_line", "drug", "log_ic50"]:
            raise ParseError(path, 1, "header must be 'cell_line,drug,log_ic50'")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            cell, drug = row[0].strip(), row[1].strip()
            if not cell or not drug:
                raise ParseError(path, lineno, "empty id")
            if (cell, drug) in seen:
                raise ParseError(path, lineno, f"duplicate response for ({cell}, {drug})")
            seen.add((cell, drug))
            records.append((cell, drug, _float(row[2], path, lineno, "log_ic50")))
    return ResponseTable(records)


def write_responses(table: ResponseTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_line", "drug", "log_ic50"])
        for cell, drug, v in table.records:
            w.writerow([cell, drug, repr(float(v))])


def load_gene_filter(path) -> list:
    with open(path) as fh:
        return [s for s in (line.strip() for line in fh) if s and not s.startswith("#")]


@dataclass(frozen=True)
class PgtEntry:
    drug: str
    cell_line: str
    weights: WeightVector
    lambda_min: float
    center: float


class PseudoGroundTruth:
    """Learned weights keyed by (drug, held-out cell line).

    Per-drug fits use the held-out key ``"*"``.
    """

    def __init__(self, gene_ids, entries: Iterable[PgtEntry] = ()):
        self.gene_ids = list(gene_ids)
        self._entries = {}
        for e in entries:
            self.add(e)

    def add(self, entry: PgtEntry) -> None:
        if len(entry.weights) != len(self.gene_ids):
            raise ValueError("weight length does not match gene count")
        self._entries[(entry.drug, entry.cell_line)] = entry

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def get(self, drug: str, cell_line: str) -> PgtEntry:
        """Entry for a target pair, falling back to the per-drug fit."""
        for key in ((drug, cell_line), (drug, PER_DRUG)):
            if key in self._entries:
                return self._entries[key]
        raise KeyError(f"no pseudo-ground truth for drug {drug!r}, cell line {cell_line!r}")

    @property
    def drugs(self) -> list:
        return sorted({d for d, _ in self._entries})

    def cell_lines(self, drug: str) -> list:
        return sorted(c for d, c in self._entries if d == drug and c != PER_DRUG)

    def entries(self) -> list:
        return [self._entries[k] for k in sorted(self._entries)]

    def save(self, directory) -> list:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for drug in self.drugs:
            path = directory / (quote(drug, safe="") + ".csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["cell_line", "lambda_min", "center", *self.gene_ids])
                for e in self.entries():
                    if e.drug == drug:
                        w.writerow([e.cell_line, repr(e.lambda_min), repr(e.center),
                                    *(repr(float(v)) for v in e.weights.values)])
            written.append(path)
        return written

    @classmethod
    def load(cls, directory) -> "PseudoGroundTruth":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"pseudo-ground-truth cache {directory} not found")
        files = sorted(directory.glob("*.csv"))
        if not files:
            raise FileNotFoundError(f"pseudo-ground-truth cache {directory} is empty")
        pgt = None
        for path in files:
            drug = unquote(path.stem)
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                if header[:3] != ["cell_line", "lambda_min", "center"]:
                    raise ParseError(path, 1, "bad cache header")
                if pgt is None:
                    pgt = cls(header[3:])
                elif header[3:] != pgt.gene_ids:
                    raise ParseError(path, 1, "gene ids differ between cache files")
                for row in reader:
                    lineno = reader.line_num
                    if len(row) != len(header):
                        raise ParseError(path, lineno, "wrong field count")
                    vals = [_float(v, path, lineno, "number") for v in row[1:]]
                    pgt.add(PgtEntry(drug, row[0], WeightVector(vals[2:]), vals[0], vals[1]))
        return pgt


def training_cells(expr: ExpressionTable, resp: ResponseTable, drug: str, exclude=None) -> tuple[list, np.ndarray]:
    """Cell lines with both expression and a response for ``drug``, in expression order."""
    by_cell = resp.for_drug(drug)
    if not by_cell:
        raise KeyError(f"drug {drug!r} has no responses")
    missing = [c for c in expr.cell_line_ids if c not in by_cell]
    if missing:
        warnings.warn(f"{len(missing)} cell lines lack a response for {drug!r}; skipped")
    cells = [c for c in expr.cell_line_ids if c in by_cell and c != exclude]
    return cells, np.array([by_cell[c] for c in cells])


def learn_pseudo_ground_truth(
    expr: ExpressionTable,
    resp: ResponseTable,
    drug: str,
    held_out: Optional[str],
    seed: int = 0,
    *,
    folds: int = 10,
    grid_size: int = 100,
    min_cells: int = 12,
) -> PgtEntry:
    """Lasso weights for ``drug`` learned without the held-out cell line.

    Responses are centered (the center is stored) and the penalty is chosen
    by ``folds``-fold CV over ``grid_size`` values. ``held_out=None`` fits
    on every cell line.
    """
    if held_out is not None:
        if held_out not in expr:
            raise KeyError(f"cell line {held_out!r} not in expression table")
        if held_out not in resp.for_drug(drug):
            raise KeyError(f"cell line {held_out!r} has no response for drug {drug!r}")
    cells, y = training_cells(expr, resp, drug, exclude=held_out)
    if len(cells) < min_cells:
        raise ValueError(
            f"drug {drug!r}: only {len(cells)} training cell lines, need {min_cells}"
        )
    center = float(y.mean())
    data = Dataset(expr.rows(cells), y - center, expr.gene_ids)
    cv = cv_select_lambda(data, 1.0, folds, grid_size, seed, standardize=True)
    fit = fit_lasso(data, LassoConfig(alpha=1.0, lam=cv.lambda_min, standardize=True))
    return PgtEntry(drug, PER_DRUG if held_out is None else held_out,
                    fit.weights, cv.lambda_min, center)


def learn_all(expr, resp, drugs, cells=None, seed=0, per_drug=False, **kw) -> PseudoGroundTruth:
    """Fit every requested (drug, cell line) pair; pairs without a response are skipped."""
    pgt = PseudoGroundTruth(expr.gene_ids)
    for drug in drugs:
        if per_drug:
            pgt.add(learn_pseudo_ground_truth(expr, resp, drug, None, seed, **kw))
            continue
        by_cell = resp.for_drug(drug)
        if not by_cell:
            raise KeyError(f"drug {drug!r} has no responses")
        wanted = expr.cell_line_ids if cells is None else cells
        for cell in wanted:
            if cell in by_cell and cell in expr:
                pgt.add(learn_pseudo_ground_truth(expr, resp, drug, cell, seed, **kw))
    return pgt


def build_target_cases(pgt: PseudoGroundTruth, expr: ExpressionTable, resp: ResponseTable,
                       drugs, cell_lines) -> list[TargetCase]:
    """One target per (drug, cell line), drugs outermost."""
    cases = []
    for drug in drugs:
        for cell in cell_lines:
            entry = pgt.get(drug, cell)
            if cell not in expr:
                raise KeyError(f"cell line {cell!r} not in expression table")
            cases.append(TargetCase(expr.row(cell), entry.weights))
    return cases


def write_synthetic_fixture(directory, n_cells=40, n_genes=30, drugs=("D1", "D2", "D3"),
                            active=3, noise=0.0, seed=0) -> dict:
    """GDSC-shaped synthetic tables with planted sparse linear responses.

    Writes ``expression.csv`` (raw counts), ``responses.csv`` and
    ``genes.txt``; returns their paths and the planted weights per drug.
    """
    rng = np.random.default_rng(seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cells = [f"CL{i:03d}" for i in range(n_cells)]
    genes = [f"G{j:03d}" for j in range(n_genes)]
    counts = rng.poisson(rng.uniform(5, 200, size=n_genes), size=(n_cells, n_genes))
    logged = np.log2(counts + 1.0)
    planted = {}
    records = []
    for drug in drugs:
        support = np.sort(rng.choice(n_genes, size=active, replace=False))
        w = np.zeros(n_genes)
        w[support] = rng.choice([-1, 1], size=active) * rng.uniform(1.0, 2.0, size=active)
        planted[drug] = w
        y = (logged - logged.mean(axis=0)) @ w + 2.0 + noise * rng.standard_normal(n_cells)
        records += [(c, drug, float(v)) for c, v in zip(cells, y)]
    expr_path = directory / "expression.csv"
    with open(expr_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_line", *genes])
        w.writerow(["#scale=raw"])
        for c, row in zip(cells, counts):
            w.writerow([c, *(str(int(v)) for v in row)])
    resp_path = directory / "responses.csv"
    write_responses(ResponseTable(records), resp_path)
    genes_path = directory / "genes.txt"
    genes_path.write_text("\n".join(genes) + "\n")
    return {"expression": expr_path, "responses": resp_path, "genes": genes_path,
            "planted": planted, "cells": cells, "drugs": list(drugs)}
